"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, Field, model_validator


class PolicyIn(BaseModel):
    kind: Literal["time_window", "one_off"]
    expires_at: int | None = Field(default=None, ge=0)
    expires_in: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _window_needs_expiry(self) -> PolicyIn:
        if self.kind == "time_window" and (self.expires_at is None) == (self.expires_in is None):
            raise ValueError("time_window needs exactly one of expires_at or expires_in")
        if self.kind == "one_off" and (self.expires_at is not None or self.expires_in is not None):
            raise ValueError("one_off links take no expiry")
        return self


class LinkCreate(BaseModel):
    presentation_id: str | None = None
    presentation: dict[str, Any] | None = None
    policy: PolicyIn
    now: int | None = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _one_source(self) -> LinkCreate:
        if (self.presentation_id is None) == (self.presentation is None):
            raise ValueError("give exactly one of presentation_id or presentation")
        return self


class LinkOut(BaseModel):
    token: str
    url: str
    state: str
    created_at: int
    policy: dict[str, Any]
    holder_did: str


class ErrorOut(BaseModel):
    error: str
    detail: str


class DidDocumentOut(BaseModel):
    model_config = {"populate_by_name": True}

    context: str = Field(alias="@context")
    id: str
    publicKey: str
    service: list[dict[str, Any]]
    social: dict[str, Any] | None = None
    extra: dict[str, Any] | None = None


class LedgerHead(BaseModel):
    height: int
    block_hash: str
    pool: int


class ChainCheck(BaseModel):
    ok: bool
    failed_height: int | None = None
    reason: str = ""
