"""Two modality encoders, late fusion, three classification heads.

Shape contract, asserted at construction: video backbone 512 projected to
256; audio frame features [F, 256] through self-attention and a temporal
max-pool to 256; concatenation 512; fusion 256. The multimodal head is
binary or multiclass, the two unimodal helper heads are always binary.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn


@dataclass
class SimbaConfig:
    video_feature_width: int = 512
    embed_width: int = 256
    attention_layers: int = 2
    attention_heads: int = 8
    attention_enabled: bool = True  # ablation switch for the audio encoder
    head: str = "binary"  # binary | multiclass
    n_classes: int = 2  # multiclass head width (real + fake combos)
    n_mels: int = 64
    base_channels: int = 16
    lr: float = 1e-4
    weight_decay: float = 0.05
    adam_eps: float = 1e-8
    plateau_patience: int = 4
    early_stop_patience: int = 8
    max_epochs: int = 40
    batch_size: int = 16
    seed: int = 0


@dataclass
class ForwardOutput:
    video_logit: torch.Tensor  # [B]
    audio_logit: torch.Tensor  # [B]
    multimodal: torch.Tensor  # [B] binary logit or [B, C] class logits
    fused_embedding: torch.Tensor  # [B, 256]


class VideoEncoder(nn.Module):
    """Shallow factorized spatiotemporal conv stack: each block runs a 2-d
    spatial conv followed by a 1-d temporal conv. Same 512->256 interface as a
    full R(2+1)D backbone so pretrained weights could be dropped in."""

    def __init__(self, config: SimbaConfig):
        super().__init__()
        c = config.base_channels
        widths = [3, c, 2 * c, 4 * c]
        blocks = []
        for c_in, c_out in zip(widths, widths[1:]):
            blocks += [
                nn.Conv3d(c_in, c_out, kernel_size=(1, 3, 3), stride=(1, 2, 2), padding=(0, 1, 1)),
                nn.BatchNorm3d(c_out),
                nn.LeakyReLU(0.1),
                nn.Conv3d(c_out, c_out, kernel_size=(3, 1, 1), padding=(1, 0, 0)),
                nn.BatchNorm3d(c_out),
                nn.LeakyReLU(0.1),
            ]
        self.blocks = nn.Sequential(*blocks)
        self.pool = nn.AdaptiveAvgPool3d(1)
        self.to_feature = nn.Linear(widths[-1], config.video_feature_width)
        self.project = nn.Linear(config.video_feature_width, config.embed_width)
        # keeps the two modality vectors on comparable scales for the fusion
        self.out_norm = nn.LayerNorm(config.embed_width)

    def forward(self, clips: torch.Tensor) -> torch.Tensor:
        # clips arrive channels-last: [B, N, H, W, 3]
        if clips.dim() == 4:
            clips = clips.unsqueeze(0)
        x = clips.permute(0, 4, 1, 2, 3).to(self.to_feature.weight.dtype)
        x = self.pool(self.blocks(x)).flatten(1)
        feature = torch.nn.functional.leaky_relu(self.to_feature(x), 0.1)
        return self.out_norm(self.project(feature))


class AudioEncoder(nn.Module):
    """Per-frame features from mel bins, self-attention over time, max-pool."""

    def __init__(self, config: SimbaConfig):
        super().__init__()
        w = config.embed_width
        self.frame_net = nn.Sequential(
            nn.Linear(config.n_mels, w // 2),
            nn.LeakyReLU(0.1),
            nn.Linear(w // 2, w),
            nn.LeakyReLU(0.1),
        )
        self.attention_enabled = config.attention_enabled
        layer = nn.TransformerEncoderLayer(
            d_model=w,
            nhead=config.attention_heads,
            dim_feedforward=2 * w,
            batch_first=True,
            dropout=0.0,
        )
        self.attention = nn.TransformerEncoder(layer, num_layers=config.attention_layers)
        self.out_norm = nn.LayerNorm(w)

    @staticmethod
    def _positional_encoding(n: int, width: int, dtype, device) -> torch.Tensor:
        # sinusoidal; without it self-attention cannot see temporal order
        position = torch.arange(n, dtype=dtype, device=device).unsqueeze(1)
        div = torch.exp(
            torch.arange(0, width, 2, dtype=dtype, device=device)
            * (-torch.log(torch.tensor(10000.0, dtype=dtype)) / width)
        )
        enc = torch.zeros(n, width, dtype=dtype, device=device)
        enc[:, 0::2] = torch.sin(position * div)
        enc[:, 1::2] = torch.cos(position * div)
        return enc

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        # mel: [B, F, n_mels] (or [F, n_mels] for a single sample)
        if mel.dim() == 2:
            mel = mel.unsqueeze(0)
        if mel.shape[1] < 1:
            raise ValueError("empty spectrogram")
        frames = self.frame_net(mel.to(self.out_norm.weight.dtype))
        if self.attention_enabled:
            pos = self._positional_encoding(
                frames.shape[1], frames.shape[2], frames.dtype, frames.device
            )
            frames = self.attention(frames + pos)
        return self.out_norm(frames.max(dim=1).values)


class SimbaModel(nn.Module):
    def __init__(self, config: SimbaConfig):
        super().__init__()
        self.config = config
        torch.manual_seed(config.seed)
        self.video_encoder = VideoEncoder(config)
        self.audio_encoder = AudioEncoder(config)
        w = config.embed_width
        self.video_head = nn.Linear(w, 1)
        self.audio_head = nn.Linear(w, 1)
        self.fusion = nn.Linear(2 * w, w)
        out_width = 1 if config.head == "binary" else config.n_classes
        self.multimodal_head = nn.Linear(w, out_width)

        assert self.video_encoder.project.in_features == 512
        assert self.video_encoder.project.out_features == 256
        assert self.fusion.in_features == 512
        assert self.fusion.out_features == 256

    def forward(self, clips: torch.Tensor, mel: torch.Tensor) -> ForwardOutput:
        video_vec = self.video_encoder(clips)
        audio_vec = self.audio_encoder(mel)
        fused = self.fusion(torch.cat([video_vec, audio_vec], dim=1))
        multimodal = self.multimodal_head(fused)
        if self.config.head == "binary":
            multimodal = multimodal.squeeze(-1)
        return ForwardOutput(
            video_logit=self.video_head(video_vec).squeeze(-1),
            audio_logit=self.audio_head(audio_vec).squeeze(-1),
            multimodal=multimodal,
            fused_embedding=fused,
        )


def simba_loss(outputs: ForwardOutput, labels: dict) -> tuple:
    """Unweighted sum of the two unimodal BCE terms and the multimodal term
    (BCE for the binary head, CE for the multiclass head).

    labels: video_fake [B] float, audio_fake [B] float, sample_fake [B]
    float, combo_class [B] long.
    """
    bce = nn.functional.binary_cross_entropy_with_logits
    dtype = outputs.video_logit.dtype
    video = bce(outputs.video_logit, labels["video_fake"].to(dtype))
    audio = bce(outputs.audio_logit, labels["audio_fake"].to(dtype))
    if outputs.multimodal.dim() == 1:
        multimodal = bce(outputs.multimodal, labels["sample_fake"].to(dtype))
    else:
        multimodal = nn.functional.cross_entropy(outputs.multimodal, labels["combo_class"])
    total = video + audio + multimodal
    return total, {"video": video, "audio": audio, "multimodal": multimodal}


def multimodal_fake_score(outputs: ForwardOutput) -> torch.Tensor:
    """Monotone fakeness score: sigmoid for binary, 1 - p_real for multiclass."""
    if outputs.multimodal.dim() == 1:
        return torch.sigmoid(outputs.multimodal)
    probs = torch.softmax(outputs.multimodal, dim=-1)
    return 1.0 - probs[:, 0]  # class 0 is real by convention
