"""HTTP service exposing share links and read-only registry/ledger views."""

from .app import create_app

__all__ = ["create_app"]
