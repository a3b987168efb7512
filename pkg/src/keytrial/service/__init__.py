"""HTTP trial-conduct service: FastAPI app, pydantic models, event-log store."""

from .app import create_app

__all__ = ["create_app"]
