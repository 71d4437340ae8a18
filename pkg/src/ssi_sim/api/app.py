"""FastAPI application over a :class:`~ssi_sim.world.World`.

``GET /share/{token}`` is the public endpoint a verifier follows; the other
routes are for the holder.  When the app is bound to a state directory every
request loads the world from disk and mutating requests write it back, so the
CLI and the service can share one state.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, Response

from ..credentials import Presentation
from ..encoding import H, from_hex
from ..errors import SsiError
from ..share_links import OneOff, ShareLink, TimeWindow
from ..world import World
from .schemas import ChainCheck, DidDocumentOut, ErrorOut, LedgerHead, LinkCreate, LinkOut

STATUS = {
    "UnknownToken": 404,
    "NotFound": 404,
    "UnknownDid": 404,
    "Expired": 410,
    "Consumed": 410,
    "Revoked": 410,
    "RevokedDid": 410,
    "NotHolder": 403,
    "ClockSkew": 409,
}

ERROR_RESPONSES = {code: {"model": ErrorOut} for code in (400, 403, 404, 409, 410)}


class WorldHost:
    """Serializes access to a world, optionally persisted in a state directory."""

    def __init__(self, world: World | None = None, state_dir: Path | str | None = None, seed: int = 0):
        self.state_dir = Path(state_dir) if state_dir is not None else None
        self._world = world if world is not None else (None if self.state_dir else World(seed))
        self._seed = seed
        self._lock = threading.RLock()

    @contextmanager
    def use(self, *, write: bool = False) -> Iterator[World]:
        with self._lock:
            world = self._world if self.state_dir is None else World.open(self.state_dir, self._seed)
            try:
                yield world
            finally:
                # denied accesses are logged too, so persist even on error
                if write and self.state_dir is not None:
                    world.save(self.state_dir)


def _link_out(link: ShareLink, base: str) -> LinkOut:
    return LinkOut(
        token=link.token,
        url=f"{base}/share/{link.token}",
        state=link.state.value,
        created_at=link.created_at,
        policy=link.to_json()["policy"],
        holder_did=link.holder_did,
    )


def create_app(world: World | None = None, *, state_dir: Path | str | None = None, seed: int = 0) -> FastAPI:
    host = WorldHost(world, state_dir, seed)
    app = FastAPI(title="ssi-sim", version="0.1.0")
    app.state.host = host

    @app.exception_handler(SsiError)
    async def _ssi_error(_: Request, exc: SsiError) -> JSONResponse:
        return JSONResponse(status_code=STATUS.get(exc.code, 400), content={"error": exc.code, "detail": str(exc)})

    @app.post("/links", response_model=LinkOut, status_code=201, responses=ERROR_RESPONSES)
    def create_link(body: LinkCreate, request: Request) -> LinkOut:
        with host.use(write=True) as w:
            if body.presentation is not None:
                pres = Presentation.from_json(body.presentation)
                w.presentations.setdefault(H(pres.to_bytes()).hex(), pres)
            else:
                try:
                    pres = w.presentations[body.presentation_id]
                except KeyError:
                    return JSONResponse(status_code=404, content={"error": "NotFound", "detail": "unknown presentation id"})
            if body.policy.kind == "one_off":
                policy = OneOff()
            elif body.policy.expires_at is not None:
                policy = TimeWindow(body.policy.expires_at)
            else:
                base_now = body.now if body.now is not None else w.ledger.current_height()
                policy = TimeWindow(base_now + body.policy.expires_in)
            link = w.shares.create_link(pres, policy, body.now)
            return _link_out(link, str(request.base_url).rstrip("/"))

    @app.get("/share/{token}", responses=ERROR_RESPONSES)
    def access(token: str, now: int | None = Query(default=None, ge=0)) -> dict:
        with host.use(write=True) as w:
            return w.shares.access(token, now).to_json()

    @app.get("/links/{token}", response_model=LinkOut, responses=ERROR_RESPONSES)
    def get_link(token: str, request: Request) -> LinkOut:
        with host.use() as w:
            return _link_out(w.shares.link(token), str(request.base_url).rstrip("/"))

    @app.delete("/links/{token}", status_code=204, responses=ERROR_RESPONSES)
    def revoke(token: str, signature: str = Query(..., description="holder signature over the revocation message, hex")):
        try:
            sig = from_hex(signature, 64)
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"error": "BadSignature", "detail": str(exc)})
        with host.use(write=True) as w:
            w.shares.revoke_link(token, sig)
        return Response(status_code=204)

    @app.get("/dids/{did}", response_model=DidDocumentOut, responses=ERROR_RESPONSES)
    def resolve(did: str) -> dict:
        with host.use() as w:
            return w.registry.resolve(did).to_json()

    @app.get("/ledger/head", response_model=LedgerHead)
    def head() -> LedgerHead:
        with host.use() as w:
            return LedgerHead(height=w.ledger.current_height(), block_hash=w.ledger.head.block_hash.hex(), pool=len(w.ledger.pool))

    @app.get("/ledger/verify", response_model=ChainCheck)
    def verify() -> ChainCheck:
        with host.use() as w:
            r = w.ledger.verify_chain()
            return ChainCheck(ok=r.ok, failed_height=r.failed_height, reason=r.reason)

    return app
