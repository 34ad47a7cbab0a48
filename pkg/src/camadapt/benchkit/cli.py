"""Command-line interface: ``camadapt <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import signal
import sys
import threading
from pathlib import Path

from .. import __version__
from ..adapt import (
    AGENT,
    DepthReprojection,
    FrameSet,
    Homography,
    Identity,
    RemoteNvs,
    ServoPolicy,
    TaskSpec,
    View,
    adapt,
    calibrate,
    default_train_rig,
    run_episode,
)
from ..camgeom import GeometryError, Plane, RigFormatError, load_rig, save_rig
from ..formats import FormatError, read_depth, read_ppm, write_depth, write_pbm, write_ppm
from ..inpaint import InpaintParams
from ..nvslink import mock_server
from ..perturb import DEFAULT_LEVELS, PerturbationSpec, perturb_camera
from ..scenesim import SceneFormatError, load_scene, render_rig, sample_scene, save_scene
from ..warpcore import SplatParams
from .bench import run_benchmark, summary_text
from .config import ConfigError, default_config, load_config

PROG = "camadapt"


class CliError(Exception):
    pass


def _xyz(s: str) -> tuple[float, float, float]:
    try:
        v = tuple(float(x) for x in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {s!r}") from None
    if len(v) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {s!r}")
    return v


# --- render-dataset ------------------------------------------------------------


def write_dataset(out: Path, scene, rig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_scene(scene, out / "scene.txt")
    save_rig(rig, out / "cameras.txt")
    for cam, r in zip(rig, render_rig(scene, rig)):
        write_ppm(out / f"view_{cam.id}.ppm", r.image)
        write_depth(out / f"view_{cam.id}.dpth", r.depth)


def cmd_render_dataset(a) -> int:
    rig = load_rig(a.rig) if a.rig else default_train_rig(a.size)
    seeds = a.seeds if a.seeds else range(a.seed, a.seed + a.count)
    for s in seeds:
        write_dataset(Path(a.out) / f"scene_{s:04d}", sample_scene(s), rig)
    print(f"wrote {len(seeds)} scene(s) to {a.out}")
    return 0


# --- perturb -------------------------------------------------------------------


def cmd_perturb(a) -> int:
    rig = load_rig(a.rig)
    if a.camera not in rig.ids:
        raise CliError(f"camera {a.camera!r} not in rig (has {', '.join(rig.ids)})")
    retarget = a.camera == AGENT if a.retarget == "auto" else a.retarget == "yes"
    spec = PerturbationSpec(DEFAULT_LEVELS[a.level], a.seed, retarget)
    save_rig(rig.replace(perturb_camera(rig[a.camera], spec, a.draw, a.target)), a.out)
    return 0


# --- adapt ---------------------------------------------------------------------


def read_views(directory: Path, rig) -> FrameSet:
    views = []
    for cam in rig:
        img_path = directory / f"view_{cam.id}.ppm"
        if not img_path.exists():
            continue
        depth_path = directory / f"view_{cam.id}.dpth"
        depth = read_depth(depth_path) if depth_path.exists() else None
        views.append(View(cam.id, read_ppm(img_path), depth))
    if not views:
        raise CliError(f"no view_<id>.ppm files for the rig cameras in {directory}")
    return FrameSet(0, tuple(views))


def cmd_adapt(a) -> int:
    views_dir = Path(a.views)
    test_rig = load_rig(a.test_rig or views_dir / "cameras.txt")
    train_rig = load_rig(a.train_rig)
    frames = read_views(views_dir, test_rig)
    if a.method == "remote" and not a.endpoint:
        raise CliError("--method remote needs --endpoint")
    plane = Plane.horizontal(a.plane_height)
    inpaint = InpaintParams(radius=a.inpaint_radius)
    method = {
        "identity": lambda: Identity(),
        "homography": lambda: Homography(plane, inpaint),
        "depth": lambda: DepthReprojection(SplatParams(a.splat_radius), inpaint),
        "remote": lambda: RemoteNvs(a.endpoint, a.timeout_ms, fallback_plane=plane),
    }[a.method]()
    out = adapt(frames, test_rig, train_rig, method)
    dest = Path(a.out)
    dest.mkdir(parents=True, exist_ok=True)
    for v in out.views:
        write_ppm(dest / f"view_{v.camera_id}.ppm", v.image)
        if v.mask is not None:
            write_pbm(dest / f"mask_{v.camera_id}.pbm", v.mask)
    if "fallback_from" in out.meta:
        print(f"remote synthesis failed ({out.meta['remote_error']}); used {out.meta['method']}", file=sys.stderr)
    return 0


# --- bench ---------------------------------------------------------------------


def cmd_bench(a) -> int:
    cfg = load_config(a.config) if a.config else default_config()
    if a.workers is not None:
        cfg = cfg.model_copy(update={"workers": a.workers})
    matrix = run_benchmark(cfg, a.out)
    sys.stdout.write(summary_text(matrix, cfg))
    return 0


# --- serve-mock-nvs ------------------------------------------------------------


def cmd_serve(a) -> int:
    scene = load_scene(a.scene) if a.scene else None
    server = mock_server(a.mode, a.bind, scene)
    print(f"mock NVS ({a.mode}) listening on {server.endpoint}", flush=True)
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    try:
        stop.wait(a.duration if a.duration else None)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


# --- servo-eval ----------------------------------------------------------------


def cmd_servo_eval(a) -> int:
    scene = load_scene(a.scene) if a.scene else sample_scene(a.scene_seed)
    train_rig = load_rig(a.rig) if a.rig else default_train_rig(a.size)
    test_rig = train_rig
    if a.level != "none":
        spec = PerturbationSpec(DEFAULT_LEVELS[a.level], a.seed)
        test_rig = train_rig.replace(perturb_camera(train_rig[a.camera], spec, a.draw))
    method = {
        "identity": Identity(),
        "homography": Homography(Plane.horizontal(0.0)),
        "depth": DepthReprojection(),
    }[a.method]
    policy = ServoPolicy(a.camera, calibrate(train_rig[a.camera]))
    rep = run_episode(scene, test_rig, train_rig, method, TaskSpec(), policy, tuple(a.start), a.max_steps,
                      keep_frames=True)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    save_rig(test_rig, out / "test_cameras.txt")
    for fs in rep.frames:
        for v in fs.views:
            write_ppm(out / f"step{fs.t:03d}_{v.camera_id}.ppm", v.image)
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "method", "synth_ms", "policy_ms", "dx", "dy", "done", "effector_x", "effector_y",
                    "psnr_full", "ssim", "fill_fraction"])
        for r in rep.rows:
            q = next((v for v in r.quality if v.camera_id == a.camera), None)
            w.writerow([r.t, r.method, f"{r.synth_ms:.3f}", f"{r.policy_ms:.3f}", repr(r.action.dx),
                        repr(r.action.dy), int(r.action.done), repr(r.effector_xy[0]), repr(r.effector_xy[1]),
                        repr(q.psnr_full) if q else "", repr(q.ssim) if q else "", repr(q.fill_fraction) if q else ""])
    verdict = "success" if rep.success else "failure"
    print(f"{verdict} after {rep.steps} steps, final distance {rep.final_distance * 1000:.1f} mm")
    return 0


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=PROG, description="Camera adaptation toolkit.")
    p.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("render-dataset", help="render random scenes to image/depth/camera files")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0, help="first scene seed")
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--seeds", type=int, nargs="+", help="explicit scene seeds (overrides --seed/--count)")
    s.add_argument("--rig", help="rig file; default: built-in two-camera rig")
    s.add_argument("--size", type=int, default=256)
    s.set_defaults(func=cmd_render_dataset)

    s = sub.add_parser("perturb", help="perturb one camera of a rig file")
    s.add_argument("--rig", required=True)
    s.add_argument("--level", required=True, choices=sorted(DEFAULT_LEVELS))
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--draw", type=int, default=0)
    s.add_argument("--camera", default=AGENT)
    s.add_argument("--target", type=_xyz, default=(0.0, 0.0, 0.0), help="look-at point x,y,z")
    s.add_argument("--retarget", choices=["auto", "yes", "no"], default="auto",
                   help="re-aim at --target after the move; auto: only for the agent camera")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_perturb)

    s = sub.add_parser("adapt", help="synthesize training views from test-time views")
    s.add_argument("--views", required=True, help="directory with view_<id>.ppm and optional .dpth files")
    s.add_argument("--test-rig", help="default: <views>/cameras.txt")
    s.add_argument("--train-rig", required=True)
    s.add_argument("--method", required=True, choices=["identity", "homography", "depth", "remote"])
    s.add_argument("--plane-height", type=float, default=0.0)
    s.add_argument("--splat-radius", type=int, default=1, choices=[1, 2, 3])
    s.add_argument("--inpaint-radius", type=int, default=5)
    s.add_argument("--endpoint")
    s.add_argument("--timeout-ms", type=float, default=200.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_adapt)

    s = sub.add_parser("bench", help="run the perturbation benchmark")
    s.add_argument("--config", help="YAML config; default: the shipped default")
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("serve-mock-nvs", help="run the mock view-synthesis service")
    s.add_argument("--mode", choices=["echo", "oracle", "geom"], default="echo")
    s.add_argument("--bind", default="127.0.0.1:7878")
    s.add_argument("--scene", help="scene file (oracle and geom modes)")
    s.add_argument("--duration", type=float, help="seconds to serve; default: until interrupted")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("servo-eval", help="run one episode and dump per-step frames and a report")
    s.add_argument("--scene", help="scene file; default: sampled from --scene-seed")
    s.add_argument("--scene-seed", type=int, default=0)
    s.add_argument("--rig")
    s.add_argument("--size", type=int, default=256)
    s.add_argument("--camera", default=AGENT)
    s.add_argument("--level", choices=["none", *sorted(DEFAULT_LEVELS)], default="none")
    s.add_argument("--seed", type=int, default=0, help="perturbation seed")
    s.add_argument("--draw", type=int, default=0)
    s.add_argument("--method", choices=["identity", "homography", "depth"], default="identity")
    s.add_argument("--start", type=float, nargs=2, default=(0.0, -0.12), metavar=("X", "Y"))
    s.add_argument("--max-steps", type=int, default=25)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_servo_eval)
    return p


_EXPECTED = (CliError, ConfigError, FormatError, RigFormatError, SceneFormatError, GeometryError, OSError, ValueError,
             LookupError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _EXPECTED as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything else is still reported, not dumped
        print(f"{PROG}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
