"""Service layer: request/response schemas, handlers, and the FastAPI app."""

from .app import create_app

__all__ = ["create_app"]
