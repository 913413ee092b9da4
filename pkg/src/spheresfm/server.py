"""HTTP/JSON API backing the annotation and viewer UI.

All mutations run under a single lock and persist the project before the
response is sent; GET endpoints never mutate state. Error mapping:
400 malformed request, 404 unknown ids, 409 prerequisite step missing,
422 solver failure (with the error category in the body).
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import pipeline
from .errors import (
    DegenerateCurve,
    PrerequisiteMissing,
    SphereSfmError,
    UnknownImageId,
)
from .project import Project, pair_key


class CorrespondenceIn(BaseModel):
    xa: float
    ya: float
    xb: float
    yb: float


class SolveIn(BaseModel):
    method: str = "manual"


def _corr_json(c) -> dict:
    return {
        "id": c.id,
        "image_a": c.image_a,
        "image_b": c.image_b,
        "xa": c.xa,
        "ya": c.ya,
        "xb": c.xb,
        "yb": c.yb,
        "source": c.source,
        "residual": c.residual,
    }


def _solution_json(sol) -> dict:
    return {
        "F": sol.F.tolist(),
        "e1": sol.e1.tolist(),
        "e2": sol.e2.tolist(),
        "R": sol.R.tolist(),
        "inlier_ids": list(sol.inlier_ids),
        "method": sol.method,
    }


def create_app(project_dir: str | Path) -> FastAPI:
    app = FastAPI(title="spheresfm", docs_url=None, redoc_url=None)
    project = Project.load(project_dir)
    project.config = project.config.with_env_overrides()
    lock = threading.RLock()

    @app.exception_handler(RequestValidationError)
    async def _malformed(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": "MalformedRequest", "message": str(exc.errors())},
        )

    @app.exception_handler(SphereSfmError)
    async def _solver_error(_req: Request, exc: SphereSfmError):
        if isinstance(exc, PrerequisiteMissing):
            status = 409
        elif isinstance(exc, UnknownImageId):
            status = 404
        else:
            status = 422
        return JSONResponse(
            status_code=status,
            content={"error": exc.category, "message": str(exc)},
        )

    def _require_pair(a: str, b: str) -> None:
        project.require_images(a, b)

    # -- read endpoints -------------------------------------------------------

    @app.get("/api/project")
    def get_project():
        with lock:
            pairs = {}
            for key, corrs in sorted(project.correspondences.items()):
                pairs[key] = {
                    "n_manual": sum(c.source == "manual" for c in corrs),
                    "n_imported": sum(c.source == "imported" for c in corrs),
                    "n_augmented": sum(c.source == "augmented" for c in corrs),
                    "solved": key in project.solutions,
                }
            for key in project.solutions:
                pairs.setdefault(
                    key,
                    {"n_manual": 0, "n_imported": 0, "n_augmented": 0, "solved": True},
                )
            return {
                "images": [
                    {"id": e.id, "width": e.width, "height": e.height}
                    for e in sorted(project.images.values(), key=lambda e: e.id)
                ],
                "pairs": pairs,
                "registered": project.rig is not None,
                "n_points": len(project.points),
                "dense_pairs": sorted(
                    k for k, v in project.dense_index.items() if "ply" in v
                ),
            }

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str):
        with lock:
            project.require_images(image_id)
            data = (project.dir / project.images[image_id].path).read_bytes()
        return Response(content=data, media_type="image/png")

    @app.get("/api/pairs/{a}/{b}/correspondences")
    def get_correspondences(a: str, b: str):
        with lock:
            _require_pair(a, b)
            corrs = project.pair_correspondences(a, b)
            return {"correspondences": [_corr_json(c) for c in corrs]}

    @app.get("/api/pairs/{a}/{b}/solution")
    def get_solution(a: str, b: str):
        with lock:
            _require_pair(a, b)
            key = pair_key(a, b)
            if key not in project.solutions:
                raise PrerequisiteMissing(f"pair {key} not solved yet")
            return _solution_json(project.solutions[key])

    @app.get("/api/pairs/{a}/{b}/epipolar-curve")
    def get_epipolar_curve(a: str, b: str, x: float, y: float):
        with lock:
            _require_pair(a, b)
            try:
                segments = pipeline.epipolar_curve_for_pair(project, a, b, x, y)
            except DegenerateCurve:
                return {"segments": [], "degenerate": True}
            return {
                "segments": [seg.tolist() for seg in segments],
                "degenerate": False,
            }

    @app.get("/api/pointcloud")
    def get_pointcloud():
        with lock:
            if project.rig is None:
                raise PrerequisiteMissing("run register before requesting the cloud")
            cameras = [
                {
                    "image_id": image_id,
                    "theta": float(project.rig.thetas[i]),
                    "center": project.rig.centers[i].tolist(),
                }
                for i, image_id in enumerate(project.rig.image_ids)
            ]
            points = [
                {
                    "track_id": p.track_id,
                    "P": p.P.tolist(),
                    "color": list(p.color),
                    "accepted": p.accepted,
                    "rms_residual": p.rms_residual,
                    "observations": {
                        k: [v[0], v[1]] for k, v in p.observations.items()
                    },
                }
                for p in project.points
            ]
            return {"cameras": cameras, "points": points}

    @app.get("/api/dense/{a}/{b}")
    def get_dense(a: str, b: str):
        with lock:
            _require_pair(a, b)
            entry = project.dense_index.get(pair_key(a, b), {})
            if "ply" not in entry:
                raise PrerequisiteMissing(f"no dense cloud for {pair_key(a, b)}")
            data = (project.dir / entry["ply"]).read_bytes()
        return Response(content=data, media_type="application/octet-stream")

    # -- write endpoints ------------------------------------------------------

    @app.post("/api/pairs/{a}/{b}/correspondences", status_code=201)
    def post_correspondence(a: str, b: str, body: CorrespondenceIn):
        from .correspondence import Correspondence

        with lock:
            _require_pair(a, b)
            rec = project.add_correspondence(
                Correspondence(
                    image_a=a, image_b=b,
                    xa=body.xa, ya=body.ya, xb=body.xb, yb=body.yb,
                    source="manual",
                )
            )
            project.save()
            return _corr_json(rec)

    @app.delete("/api/pairs/{a}/{b}/correspondences/{corr_id}")
    def delete_correspondence(a: str, b: str, corr_id: int):
        with lock:
            _require_pair(a, b)
            key = pair_key(a, b)
            pool = project.correspondences.get(key, [])
            kept = [c for c in pool if c.id != corr_id]
            if len(kept) == len(pool):
                return JSONResponse(
                    status_code=404,
                    content={"error": "UnknownId", "message": f"no correspondence {corr_id}"},
                )
            project.correspondences[key] = kept
            project.save()
            return {"deleted": corr_id}

    @app.post("/api/pairs/{a}/{b}/solve")
    def post_solve(a: str, b: str, body: SolveIn | None = None):
        with lock:
            _require_pair(a, b)
            method = body.method if body else "manual"
            record = pipeline.estimate_pair(project, a, b, method)
            project.save()
            corrs = project.pair_correspondences(a, b)
            return {
                **_solution_json(record),
                "inlier_mask": [
                    (c.id in record.inlier_ids) for c in corrs
                ],
            }

    @app.post("/api/register")
    def post_register():
        with lock:
            rig = pipeline.register(project)
            project.save()
            project.save_poses()
            return {
                "image_ids": rig.image_ids,
                "thetas": rig.thetas.tolist(),
                "centers": rig.centers.tolist(),
            }

    @app.post("/api/triangulate")
    def post_triangulate():
        with lock:
            points = pipeline.triangulate(project)
            project.save()
            return {
                "n_points": len(points),
                "n_accepted": sum(p.accepted for p in points),
            }

    # -- static UI ------------------------------------------------------------

    ui_dir = _find_ui_dir()
    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def _find_ui_dir() -> Path | None:
    import os

    env = os.environ.get("SPHERESFM_UI_DIR")
    if env and Path(env).is_dir():
        return Path(env)
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if candidate.is_dir():
        return candidate
    return None


def serve(project_dir: str | Path, port: int) -> None:
    import uvicorn

    app = create_app(project_dir)
    print(f"serving project {project_dir} at http://127.0.0.1:{port}/")
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
