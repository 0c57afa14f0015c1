"""API package exports."""

from app.api import router

__all__ = ["router"]
