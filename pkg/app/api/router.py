"""Aggregate API router for the FastAPI application."""

from fastapi import APIRouter

from app.api.routes import retrieval, scenarios

api_router = APIRouter()
api_router.include_router(scenarios.router)
api_router.include_router(retrieval.router)
