"""Request and response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class OnlineRequest(BaseModel):
    bundle: str
    mu: list[float] = Field(min_length=1, max_length=2)
    variant: str
    truth: bool = False
    n: int | None = Field(default=None, ge=1)
    newton_max: int | None = Field(default=None, ge=0)


class OnlineResponse(BaseModel):
    row: dict[str, float | int | str | None]


class ValidateRequest(BaseModel):
    bundle: str
    plan: str  # flat key=value text


class ValidateResponse(BaseModel):
    rows: list[dict]
    summary: list[dict]
    files: list[str]


class OfflineRequest(BaseModel):
    config: str  # flat key=value text
    output: str | None = None


class OfflineResponse(BaseModel):
    bundle: str
    files: list[str]


class InfoResponse(BaseModel):
    manifest: dict
    energy: list[dict]
    timings: dict


class ErrorBody(BaseModel):
    kind: str
    exit_code: int
    message: str
    context: dict = {}
