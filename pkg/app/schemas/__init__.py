"""Schema exports."""

from app.schemas.retrieval import (
	ApertureSpec,
	Direction,
	RetrievalRequest,
	RetrievalResponse,
	SimulateRequest,
	SimulateResponse,
	SourcePayload,
)

__all__ = [
	"ApertureSpec",
	"Direction",
	"RetrievalRequest",
	"RetrievalResponse",
	"SimulateRequest",
	"SimulateResponse",
	"SourcePayload",
]
