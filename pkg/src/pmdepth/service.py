"""HTTP session service for the interactive guidance loop.

A session holds a sample tensor and a growing set of candidate depth
estimates.  Clients fetch mode previews, submit annotation rectangles on
modes they dislike, request the next (repelled) estimate, and commit a
final selection.  Sessions are event-sourced: every accepted mutation is
appended to a JSON-lines log under the state directory, and replaying the
log reconstructs the exact same modes (all solves are deterministic).

Concurrency: mutations on one session are serialized and rejected with
409 while a solve is in flight; different sessions solve independently.
"""

from __future__ import annotations

import base64
import json
import secrets
import threading
import time
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, ConfigDict, Field

from . import apps, formats
from .core import BinaryMask, DepthMap, make_patch_grid
from .density import mean_depth, variance_map
from .metrics import error_report
from .samplers import SampleSet, render_scene, synthesize_samples
from .solver import DEFAULT_DIVERSITY_WEIGHT, SolverOptions


# ---------------------------------------------------------- request models


class RectModel(BaseModel):
    """Annotation rectangle on one mode: (x, y) is the top-left corner in
    (column, row) order; w columns wide, h rows tall."""

    mode: int
    x: int
    y: int
    w: int
    h: int


class CreateRequest(BaseModel):
    samples_path: Optional[str] = None
    scene_spec: Optional[dict] = None
    sampler_cfg: Optional[dict] = None
    patch: int = 33
    stride: int = 4
    n_samples: int = 100
    seed: Optional[int] = None
    solver: Optional[dict] = None


class NextRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lam: Optional[float] = Field(default=None, alias="lambda")
    annotations: list[RectModel] = Field(default_factory=list)


class SelectRequest(BaseModel):
    mode: int


# --------------------------------------------------------- response models


class CreateResponse(BaseModel):
    id: str
    revision: int
    status: str
    mode_count: int


class SessionInfo(BaseModel):
    id: str
    revision: int
    status: str
    mode_count: int
    height: int
    width: int
    has_ground_truth: bool
    selected: Optional[int]
    annotated_modes: list[int]
    last_error: Optional[str]


class ModeResponse(BaseModel):
    revision: int
    index: int
    provenance: str
    payload: str
    preview: list[list[int]]
    lo: float
    hi: float


class NextResponse(BaseModel):
    revision: int
    status: str
    generating_index: int


class SelectResponse(BaseModel):
    revision: int
    selected: int
    metrics: Optional[dict]


class VarianceResponse(BaseModel):
    revision: int
    payload: str
    preview: list[list[int]]
    lo: float
    hi: float


# ----------------------------------------------------------------- session


def _preview_grid(values: np.ndarray, lo: float, hi: float) -> list[list[int]]:
    if hi > lo:
        scaled = np.clip((values.astype(np.float64) - lo) / (hi - lo), 0.0, 1.0)
    else:
        scaled = np.zeros_like(values, dtype=np.float64)
    return np.rint(scaled * 255).astype(int).tolist()


def _compute_next_mode(ss, modeset, lam, opts):
    return apps.next_mode(ss, modeset, lam=lam, opts=opts)


class Session:
    def __init__(
        self,
        session_id: str,
        ss: SampleSet,
        gt: Optional[DepthMap],
        opts: Optional[SolverOptions],
        log_path: Path,
    ):
        self.id = session_id
        self.ss = ss
        self.gt = gt
        self.opts = opts
        self.log_path = log_path
        self.lock = threading.Lock()
        self.status = "idle"
        self.revision = 1
        self.selected: Optional[int] = None
        self.last_error: Optional[str] = None
        self.history: list[dict] = []
        self.rects: dict[int, list[tuple[int, int, int, int]]] = {}
        self.modeset = apps.ModeSet(
            modes=(mean_depth(ss),), masks=(None,), provenance=("mean",)
        )
        z1 = self.modeset.modes[0].values
        self.range = (float(z1.min()), float(z1.max()))

    # -- event log -------------------------------------------------------

    def append_event(self, event: str, body: dict) -> None:
        record = {"event": event, "time": time.time(), "body": body}
        self.history.append(record)
        with self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")
            fh.flush()

    # -- state transitions (caller holds the lock) ------------------------

    def apply_annotations(self, annotations: list[RectModel]) -> None:
        h, w = self.modeset.shape
        for rect in annotations:
            if not 0 <= rect.mode < len(self.modeset):
                raise HTTPException(
                    status_code=422,
                    detail=f"annotation targets mode {rect.mode}, have "
                    f"{len(self.modeset)} modes",
                )
            if (
                rect.w < 1
                or rect.h < 1
                or rect.x < 0
                or rect.y < 0
                or rect.x + rect.w > w
                or rect.y + rect.h > h
            ):
                raise HTTPException(
                    status_code=422,
                    detail=f"rectangle (x={rect.x}, y={rect.y}, w={rect.w}, "
                    f"h={rect.h}) exceeds the {h}x{w} image",
                )
        for rect in annotations:
            self.rects.setdefault(rect.mode, []).append(
                (rect.x, rect.y, rect.w, rect.h)
            )
            mask = self.modeset.masks[rect.mode]
            values = (
                mask.values.copy()
                if mask is not None
                else np.zeros((h, w), dtype=np.uint8)
            )
            values[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w] = 1
            self.modeset = self.modeset.with_mask(rect.mode, BinaryMask(values))

    def finish_solve(self, mode: DepthMap, label: str) -> None:
        self.modeset = self.modeset.with_mode(mode, label)
        self.status = "idle"
        self.revision += 1

    def fail_solve(self, message: str) -> None:
        self.status = "idle"
        self.last_error = message
        self.revision += 1

    def run_next(self, lam: float) -> None:
        try:
            mode, label = _compute_next_mode(self.ss, self.modeset, lam, self.opts)
        except Exception as exc:  # surfaced via session info
            with self.lock:
                self.fail_solve(str(exc))
            return
        with self.lock:
            self.finish_solve(mode, label)


# ------------------------------------------------------------------- app


def _build_sample_set(body: CreateRequest) -> tuple[SampleSet, Optional[DepthMap]]:
    has_path = body.samples_path is not None
    has_scene = body.scene_spec is not None
    if has_path == has_scene:
        raise HTTPException(
            status_code=422,
            detail="provide exactly one of samples_path or scene_spec",
        )
    if has_path:
        try:
            ss = formats.load_samples(body.samples_path)
        except (OSError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return ss, None
    try:
        spec = formats.scene_spec_from_json(body.scene_spec, seed=body.seed)
        gt = render_scene(spec)
        grid = make_patch_grid(gt.shape[0], gt.shape[1], body.patch, body.stride)
        cfg = formats.sampler_config_from_json(
            body.sampler_cfg or {}, seed=body.seed
        )
        ss = synthesize_samples(gt, grid, body.n_samples, cfg)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return ss, gt


def create_app(state_dir) -> FastAPI:
    state = Path(state_dir)
    state.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="pmdepth session service")
    # the browser frontend is served as static files on another origin
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    def build_session(session_id: str, body: CreateRequest) -> Session:
        ss, gt = _build_sample_set(body)
        opts = (
            formats.solver_options_from_json(body.solver)
            if body.solver is not None
            else None
        )
        return Session(session_id, ss, gt, opts, state / f"{session_id}.jsonl")

    def replay_session(session_id: str) -> Optional[Session]:
        log_path = state / f"{session_id}.jsonl"
        if not log_path.exists():
            return None
        records = [
            json.loads(line)
            for line in log_path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        if not records or records[0]["event"] != "created":
            return None
        session = build_session(session_id, CreateRequest(**records[0]["body"]))
        session.history = records
        for record in records[1:]:
            if record["event"] == "next":
                body = NextRequest(**record["body"])
                session.apply_annotations(body.annotations)
                session.status = "solving"
                session.revision += 1
                lam = (
                    body.lam if body.lam is not None else DEFAULT_DIVERSITY_WEIGHT
                )
                mode, label = _compute_next_mode(
                    session.ss, session.modeset, lam, session.opts
                )
                session.finish_solve(mode, label)
            elif record["event"] == "selected":
                session.selected = int(record["body"]["mode"])
                session.revision += 1
        return session

    def get_session(session_id: str) -> Session:
        with registry_lock:
            session = sessions.get(session_id)
            if session is None:
                session = replay_session(session_id)
                if session is not None:
                    sessions[session_id] = session
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return session

    @app.post("/sessions", response_model=CreateResponse)
    def create_session(body: CreateRequest) -> CreateResponse:
        session_id = secrets.token_hex(8)
        session = build_session(session_id, body)
        session.append_event("created", body.model_dump())
        with registry_lock:
            sessions[session_id] = session
        return CreateResponse(
            id=session_id,
            revision=session.revision,
            status=session.status,
            mode_count=len(session.modeset),
        )

    @app.get("/sessions/{session_id}", response_model=SessionInfo)
    def session_info(session_id: str) -> SessionInfo:
        session = get_session(session_id)
        with session.lock:
            h, w = session.modeset.shape
            return SessionInfo(
                id=session.id,
                revision=session.revision,
                status=session.status,
                mode_count=len(session.modeset),
                height=h,
                width=w,
                has_ground_truth=session.gt is not None,
                selected=session.selected,
                annotated_modes=sorted(session.rects),
                last_error=session.last_error,
            )

    @app.get("/sessions/{session_id}/modes/{index}", response_model=ModeResponse)
    def get_mode(session_id: str, index: int) -> ModeResponse:
        session = get_session(session_id)
        with session.lock:
            if not 0 <= index < len(session.modeset):
                raise HTTPException(
                    status_code=404,
                    detail=f"mode {index} of {len(session.modeset)} does not exist",
                )
            mode = session.modeset.modes[index]
            lo, hi = session.range
            return ModeResponse(
                revision=session.revision,
                index=index,
                provenance=session.modeset.provenance[index],
                payload=base64.b64encode(formats.depth_to_bytes(mode)).decode(),
                preview=_preview_grid(mode.values, lo, hi),
                lo=lo,
                hi=hi,
            )

    @app.post("/sessions/{session_id}/next", response_model=NextResponse)
    def next_mode_endpoint(session_id: str, body: NextRequest) -> NextResponse:
        session = get_session(session_id)
        with session.lock:
            if session.status != "idle":
                raise HTTPException(
                    status_code=409, detail="a solve is already in flight"
                )
            session.apply_annotations(body.annotations)
            session.append_event(
                "next", body.model_dump(by_alias=True, exclude_none=True)
            )
            session.status = "solving"
            session.last_error = None
            session.revision += 1
            lam = body.lam if body.lam is not None else DEFAULT_DIVERSITY_WEIGHT
            generating = len(session.modeset)
            revision = session.revision
        threading.Thread(target=session.run_next, args=(lam,), daemon=True).start()
        return NextResponse(
            revision=revision, status="solving", generating_index=generating
        )

    @app.post("/sessions/{session_id}/select", response_model=SelectResponse)
    def select_mode(session_id: str, body: SelectRequest) -> SelectResponse:
        session = get_session(session_id)
        with session.lock:
            if session.status != "idle":
                raise HTTPException(
                    status_code=409, detail="a solve is already in flight"
                )
            if not 0 <= body.mode < len(session.modeset):
                raise HTTPException(
                    status_code=422,
                    detail=f"mode {body.mode} of {len(session.modeset)} "
                    f"does not exist",
                )
            session.append_event("selected", {"mode": body.mode})
            session.selected = body.mode
            session.revision += 1
            metrics = None
            if session.gt is not None:
                report = error_report(
                    [session.modeset.modes[body.mode]], [session.gt]
                )
                metrics = json.loads(report.to_json())
            return SelectResponse(
                revision=session.revision, selected=body.mode, metrics=metrics
            )

    @app.get("/sessions/{session_id}/variance", response_model=VarianceResponse)
    def variance_endpoint(session_id: str) -> VarianceResponse:
        session = get_session(session_id)
        with session.lock:
            var = variance_map(session.ss)
            lo, hi = 0.0, float(var.max())
            payload = formats.depth_to_bytes(DepthMap(var.astype(np.float32)))
            return VarianceResponse(
                revision=session.revision,
                payload=base64.b64encode(payload).decode(),
                preview=_preview_grid(var, lo, hi),
                lo=lo,
                hi=hi,
            )

    return app
