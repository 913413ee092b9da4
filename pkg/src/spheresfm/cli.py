"""Command-line interface for the reconstruction pipeline.

Every subcommand operates on a project directory (-C, default the current
directory), saves state atomically on success, and exits nonzero with a
machine-readable JSON error category on stderr when a step fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .errors import SphereSfmError
from .fixtures import FIXTURE_KINDS, write_fixture
from .project import Config, Project


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spheresfm",
        description="3D reconstruction from full-view equirectangular panoramas",
    )
    parser.add_argument(
        "-C", "--project", default=".", help="project directory (default: .)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a new project")
    p.add_argument("directory")

    p = sub.add_parser("add-image", help="copy a panorama into the project")
    p.add_argument("file")
    p.add_argument("--id", default=None, help="image id (default: file stem)")

    p = sub.add_parser("annotate", help="serve the annotation UI")
    p.add_argument("--port", type=int, default=None)

    p = sub.add_parser("import-matches", help="ingest an external matches file")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("file")

    p = sub.add_parser("estimate-pair", help="estimate F, epipoles, R for a pair")
    p.add_argument("a")
    p.add_argument("b")
    group = p.add_mutually_exclusive_group()
    group.add_argument(
        "--manual-only", action="store_true",
        help="eight-point fit on manual annotations (default)",
    )
    group.add_argument(
        "--ransac", action="store_true",
        help="RANSAC over the full pool including imported matches",
    )

    p = sub.add_parser("augment", help="admit F-consistent imported matches")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--epsilon", type=float, required=True)

    sub.add_parser("register", help="recover rig rotations and positions")
    sub.add_parser("triangulate", help="triangulate tracks on the rig")

    p = sub.add_parser("rectify", help="rectify a solved pair")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--width", type=int, default=None, help="rectified width")

    p = sub.add_parser("disparity", help="compute the disparity map of a pair")
    p.add_argument("a")
    p.add_argument("b")

    p = sub.add_parser("dense", help="dense point cloud from a disparity map")
    p.add_argument("a")
    p.add_argument("b")

    p = sub.add_parser("export-ply", help="export a point cloud")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--sparse", action="store_true", help="triangulated tracks (default)")
    group.add_argument("--dense", action="store_true", help="dense cloud of --pair")
    p.add_argument("--pair", nargs=2, metavar=("A", "B"), default=None)
    p.add_argument("--output", "-o", default=None)

    p = sub.add_parser("serve", help="serve the HTTP API and UI")
    p.add_argument("--port", type=int, default=None)

    p = sub.add_parser("make-fixture", help="generate a synthetic demo project")
    p.add_argument("kind", choices=sorted(FIXTURE_KINDS))
    p.add_argument("directory")
    p.add_argument("--seed", type=int, default=0)

    return parser


def _load(args) -> Project:
    project = Project.load(args.project)
    project.config = project.config.with_env_overrides()
    return project


def run(args) -> int:
    if args.command == "init":
        Project.init(args.directory, Config().with_env_overrides())
        print(f"initialized empty project at {args.directory}")
        return 0

    if args.command == "make-fixture":
        write_fixture(args.kind, args.directory, seed=args.seed)
        print(f"wrote {args.kind} fixture to {args.directory}")
        return 0

    project = _load(args)

    if args.command == "add-image":
        entry = project.add_image(args.file, args.id)
        project.save()
        print(f"added {entry.id} ({entry.width}x{entry.height})")
        return 0

    if args.command == "import-matches":
        n = pipeline.import_matches_file(project, args.a, args.b, args.file)
        project.save()
        print(f"imported {n} matches for {args.a}/{args.b}")
        return 0

    if args.command == "estimate-pair":
        method = "ransac" if args.ransac else "manual"
        record = pipeline.estimate_pair(project, args.a, args.b, method)
        project.save()
        print(
            f"solved {args.a}/{args.b} via {record.method}: "
            f"{len(record.inlier_ids)} inliers"
        )
        return 0

    if args.command == "augment":
        n = pipeline.augment(project, args.a, args.b, args.epsilon)
        project.save()
        print(f"admitted {n} imported matches into {args.a}/{args.b}")
        return 0

    if args.command == "register":
        rig = pipeline.register(project)
        project.save()
        path = project.save_poses()
        print(f"registered {len(rig.image_ids)} cameras; poses written to {path}")
        return 0

    if args.command == "triangulate":
        points = pipeline.triangulate(project)
        project.save()
        accepted = sum(p.accepted for p in points)
        print(f"triangulated {len(points)} tracks ({accepted} accepted)")
        return 0

    if args.command == "rectify":
        pipeline.rectify(project, args.a, args.b, args.width)
        project.save()
        print(f"rectified {args.a}/{args.b}")
        return 0

    if args.command == "disparity":
        disp = pipeline.disparity(project, args.a, args.b)
        project.save()
        print(
            f"disparity for {args.a}/{args.b}: "
            f"{int(disp.valid.sum())} valid pixels"
        )
        return 0

    if args.command == "dense":
        path = pipeline.dense(project, args.a, args.b)
        project.save()
        print(f"dense cloud written to {path}")
        return 0

    if args.command == "export-ply":
        if args.dense:
            if not args.pair:
                raise SphereSfmError("--dense requires --pair A B")
            key_path = project.dense_index.get(
                "|".join(sorted(args.pair)), {}
            ).get("ply")
            if key_path is None:
                path = pipeline.dense(project, *args.pair)
                project.save()
            else:
                path = project.dir / key_path
            out = Path(args.output) if args.output else path
            if out != path:
                out.write_bytes(Path(path).read_bytes())
            print(f"dense cloud at {out}")
            return 0
        out = Path(args.output) if args.output else project.dir / "sparse.ply"
        pipeline.export_sparse_ply(project, out)
        print(f"sparse cloud written to {out}")
        return 0

    if args.command in ("serve", "annotate"):
        from .server import serve

        port = args.port or project.config.serve_port
        if args.command == "annotate":
            print(f"annotation UI at http://127.0.0.1:{port}/")
        serve(project.dir, port)
        return 0

    raise AssertionError(f"unhandled command {args.command}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except SphereSfmError as exc:
        print(
            json.dumps({"error": exc.category, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
