"""Training loop over harness protocol directories.

Consumes train/val/test manifest CSVs and harness sampling plans, trains with
AdamW + reduce-on-plateau + early stopping, and emits prediction CSVs (one
per head, harness schema), a fused-embedding dump, and a checkpoint.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .data import Record, combo_classes, make_plans, read_manifest, read_wav
from .model import ForwardOutput, SimbaConfig, SimbaModel, multimodal_fake_score, simba_loss
from .spectrogram import SpectrogramConfig, log_mel, norm_stats, normalize


@dataclass
class SamplingParams:
    n_frames: int = 16
    step: int = 1  # 1 = consecutive, 5 = subsampled
    jitter: bool = False


@dataclass
class TrainResult:
    epochs_run: int
    best_val_loss: float
    stopped_early: bool
    lr_reductions: int
    history: list
    prediction_files: dict
    embedding_file: str
    checkpoint: str


def _clip_tensor(record: Record, indices) -> np.ndarray:
    frames = np.load(record.video_path)
    return frames[np.asarray(indices, dtype=int)].astype(np.float32) / 255.0


def _mel_for_span(record: Record, indices, spec_config, mean, std) -> np.ndarray:
    samples, rate = read_wav(record.audio_path)
    t0 = indices[0] / record.fps
    t1 = (indices[-1] + 1) / record.fps
    lo = max(0, round(t0 * rate))
    hi = min(len(samples), max(lo + 1, round(t1 * rate)))
    return normalize(log_mel(samples[lo:hi], rate, spec_config), mean, std)


def _labels_for(records, classes) -> dict:
    idx = {label: i for i, label in enumerate(classes)}
    return {
        "video_fake": torch.tensor([float(r.video_fake) for r in records]),
        "audio_fake": torch.tensor([float(r.audio_fake) for r in records]),
        "sample_fake": torch.tensor([float(r.sample_fake) for r in records]),
        "combo_class": torch.tensor([idx.get(r.combo_label(), 0) for r in records]),
    }


def _batch(records, plans, spec_config, mean, std):
    clips, mels = [], []
    for r in records:
        indices = plans[r.sample_id][0]["indices"]
        clips.append(_clip_tensor(r, indices))
        mels.append(_mel_for_span(r, indices, spec_config, mean, std))
    max_f = max(m.shape[0] for m in mels)
    padded = np.zeros((len(mels), max_f, mels[0].shape[1]), dtype=np.float32)
    for i, m in enumerate(mels):
        padded[i, : m.shape[0]] = m
    return torch.from_numpy(np.stack(clips)), torch.from_numpy(padded)


def _forward_dataset(model, records, plans, spec_config, mean, std, batch_size):
    outs = []
    model.eval()
    with torch.no_grad():
        for i in range(0, len(records), batch_size):
            chunk = records[i : i + batch_size]
            clips, mels = _batch(chunk, plans, spec_config, mean, std)
            outs.append(model(clips, mels))
    return ForwardOutput(
        video_logit=torch.cat([o.video_logit for o in outs]),
        audio_logit=torch.cat([o.audio_logit for o in outs]),
        multimodal=torch.cat([o.multimodal for o in outs]),
        fused_embedding=torch.cat([o.fused_embedding for o in outs]),
    )


def write_predictions(path, detector, rows, classes=None, modality=None) -> str:
    """rows: (sample_id, condition, score) or (sample_id, condition, probs)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# detector: {detector}\n")
        if modality:
            fh.write(f"# modality: {modality}\n")
        writer = csv.writer(fh)
        if classes:
            writer.writerow(["sample_id", "condition"] + [f"p_{c}" for c in classes])
            for sid, condition, probs in rows:
                writer.writerow([sid, condition] + [repr(float(p)) for p in probs])
        else:
            writer.writerow(["sample_id", "condition", "score"])
            for sid, condition, score in rows:
                writer.writerow([sid, condition, repr(float(score))])
    return str(path)


def train(
    protocol_dir: str | Path,
    out_dir: str | Path,
    config: SimbaConfig = SimbaConfig(),
    sampling: SamplingParams = SamplingParams(),
    spec_config: SpectrogramConfig = SpectrogramConfig(),
    trimmed_test_manifest: str | Path | None = None,
    detector_name: str = "simba",
) -> TrainResult:
    protocol_dir = Path(protocol_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_records = read_manifest(protocol_dir / "train.csv")
    val_records = read_manifest(protocol_dir / "val.csv")
    test_records = read_manifest(protocol_dir / "test.csv")
    classes = combo_classes(protocol_dir / "train.csv")
    if config.head == "multiclass":
        config.n_classes = len(classes)

    torch.manual_seed(config.seed)
    model = SimbaModel(config)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.lr, weight_decay=config.weight_decay, eps=config.adam_eps
    )
    scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
        optimizer, factor=0.5, patience=config.plateau_patience, eps=0.0
    )

    # scalar normalization over the training set's spectrograms
    train_specs = []
    for r in train_records:
        samples, rate = read_wav(r.audio_path)
        train_specs.append(log_mel(samples, rate, spec_config))
    mean, std = norm_stats(train_specs)

    plan_dir = out_dir / "plans"
    plan_dir.mkdir(exist_ok=True)

    def eval_plans(name):
        return make_plans(protocol_dir / f"{name}.csv", plan_dir / f"{name}_eval.json",
                          sampling.n_frames, sampling.step, "beginning", config.seed)

    val_plans = eval_plans("val") if val_records else {}
    test_plans = eval_plans("test")

    rng = np.random.default_rng(config.seed)
    best_val = float("inf")
    best_state = {k: v.clone() for k, v in model.state_dict().items()}
    since_best = 0
    lr_reductions = 0
    history = []
    epochs_run = 0

    for epoch in range(config.max_epochs):
        epochs_run = epoch + 1
        if sampling.jitter:
            train_plans = make_plans(
                protocol_dir / "train.csv", plan_dir / f"train_ep{epoch}.json",
                sampling.n_frames, sampling.step, "training",
                config.seed * 1000 + epoch, jitter=True,
            )
        else:
            train_plans = make_plans(
                protocol_dir / "train.csv", plan_dir / "train_fixed.json",
                sampling.n_frames, sampling.step, "beginning", config.seed,
            )

        order = rng.permutation(len(train_records))
        model.train()
        epoch_loss = 0.0
        n_batches = 0
        for i in range(0, len(order), config.batch_size):
            chunk = [train_records[j] for j in order[i : i + config.batch_size]]
            clips, mels = _batch(chunk, train_plans, spec_config, mean, std)
            outputs = model(clips, mels)
            loss, _components = simba_loss(outputs, _labels_for(chunk, classes))
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}: non-finite loss {loss.item()!r}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach())
            n_batches += 1

        eval_records = val_records or train_records
        eval_plan_map = val_plans or train_plans
        outs = _forward_dataset(model, eval_records, eval_plan_map, spec_config, mean, std,
                                config.batch_size)
        val_loss, _ = simba_loss(outs, _labels_for(eval_records, classes))
        val_loss = float(val_loss)

        lr_before = optimizer.param_groups[0]["lr"]
        scheduler.step(val_loss)
        if optimizer.param_groups[0]["lr"] < lr_before:
            lr_reductions += 1

        history.append(
            {"epoch": epoch, "train_loss": epoch_loss / max(n_batches, 1),
             "val_loss": val_loss, "lr": optimizer.param_groups[0]["lr"]}
        )
        if val_loss < best_val - 1e-9:
            best_val = val_loss
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.early_stop_patience:
                break

    model.load_state_dict(best_state)

    conditions = [("untrimmed", test_records, test_plans)]
    if trimmed_test_manifest:
        trimmed_records = read_manifest(trimmed_test_manifest)
        trimmed_plans = make_plans(
            trimmed_test_manifest, plan_dir / "test_trimmed_eval.json",
            sampling.n_frames, sampling.step, "beginning", config.seed,
        )
        conditions.append(("trimmed", trimmed_records, trimmed_plans))

    head_rows = {"multimodal": [], "video": [], "audio": []}
    embeddings = []
    for condition, records, plans in conditions:
        outs = _forward_dataset(model, records, plans, spec_config, mean, std, config.batch_size)
        fake = multimodal_fake_score(outs)
        video_p = torch.sigmoid(outs.video_logit)
        audio_p = torch.sigmoid(outs.audio_logit)
        for i, r in enumerate(records):
            if config.head == "multiclass":
                probs = torch.softmax(outs.multimodal[i], dim=-1)
                head_rows["multimodal"].append((r.sample_id, condition, probs.tolist()))
            else:
                head_rows["multimodal"].append((r.sample_id, condition, float(fake[i])))
            head_rows["video"].append((r.sample_id, condition, float(video_p[i])))
            head_rows["audio"].append((r.sample_id, condition, float(audio_p[i])))
            if condition == "untrimmed":
                embeddings.append((r.sample_id, outs.fused_embedding[i].tolist()))

    schema_classes = ["real"] + classes[1:]
    prediction_files = {
        "multimodal": write_predictions(
            out_dir / f"{detector_name}_multimodal.csv", detector_name,
            head_rows["multimodal"],
            classes=schema_classes if config.head == "multiclass" else None,
        ),
        "video": write_predictions(
            out_dir / f"{detector_name}_video.csv", f"{detector_name}-video",
            head_rows["video"],
        ),
        "audio": write_predictions(
            out_dir / f"{detector_name}_audio.csv", f"{detector_name}-audio",
            head_rows["audio"],
        ),
    }

    embedding_file = out_dir / f"{detector_name}_embeddings.csv"
    with open(embedding_file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id"] + [f"e{i}" for i in range(config.embed_width)])
        for sid, vec in embeddings:
            writer.writerow([sid] + [repr(v) for v in vec])

    checkpoint = out_dir / f"{detector_name}_checkpoint.pt"
    torch.save(
        {
            "state_dict": model.state_dict(),
            "config": vars(config),
            "norm_mean": mean,
            "norm_std": std,
            "classes": classes,
        },
        checkpoint,
    )
    return TrainResult(
        epochs_run=epochs_run,
        best_val_loss=best_val,
        stopped_early=epochs_run < config.max_epochs,
        lr_reductions=lr_reductions,
        history=history,
        prediction_files=prediction_files,
        embedding_file=str(embedding_file),
        checkpoint=str(checkpoint),
    )


def predict_with_checkpoint(
    checkpoint_path: str | Path,
    manifest_path: str | Path,
    out_path: str | Path,
    condition: str = "untrimmed",
    sampling: SamplingParams = SamplingParams(),
    spec_config: SpectrogramConfig = SpectrogramConfig(),
    head: str = "multimodal",
    detector_name: str = "simba",
) -> str:
    """Score a manifest with a saved checkpoint (any head, any condition)."""
    blob = torch.load(checkpoint_path, weights_only=False)
    config = SimbaConfig(**blob["config"])
    model = SimbaModel(config)
    model.load_state_dict(blob["state_dict"])
    records = read_manifest(manifest_path)
    plan_path = Path(out_path).with_suffix(".plans.json")
    plans = make_plans(manifest_path, plan_path, sampling.n_frames, sampling.step,
                       "beginning", config.seed)
    outs = _forward_dataset(model, records, plans, spec_config,
                            blob["norm_mean"], blob["norm_std"], config.batch_size)
    if head == "multimodal":
        scores = multimodal_fake_score(outs)
    elif head == "video":
        scores = torch.sigmoid(outs.video_logit)
    elif head == "audio":
        scores = torch.sigmoid(outs.audio_logit)
    else:
        raise ValueError(f"unknown head {head!r}")
    rows = [(r.sample_id, condition, float(scores[i])) for i, r in enumerate(records)]
    return write_predictions(out_path, detector_name, rows)
