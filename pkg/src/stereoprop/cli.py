"""Command-line surface: file-based pipelines over the library operators.

Every command prints a single JSON summary on stdout (parameter echo, input
hashes, output paths, wall time).  Validation problems exit with status 1
and an error JSON; I/O problems exit with status 2.  Options may come from
``--config file.json``; explicit flags override the file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np
import cv2

from . import io_formats, losses, normals, synthetic
from .errors import StereopropError
from .filtering import LocalAffinity, attention_reweight, local_affinity_filter, normalize_local_affinity
from .gradcheck import run_gradcheck
from .grid import ConfidenceMap, DisparityMap, Grid, Mask, NormalMap
from .matching import WarpedError, warped_error
from .propagation import (
    AffinityField,
    OffsetField,
    NEIGHBOR_OFFSETS,
    heuristic_offsets_from_normal,
    iterate_propagation,
    propagate_local,
)


class CliValidationError(ValueError):
    pass


class _Run:
    """Collects input hashes and output paths for the summary JSON."""

    def __init__(self):
        self.inputs = {}
        self.outputs = []

    def read(self, path: str) -> bytes:
        data = Path(path).read_bytes()
        self.inputs[path] = hashlib.sha256(data).hexdigest()
        return data

    def write(self, path: str, data: bytes) -> None:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(data)
        self.outputs.append(str(path))


def _require(params: dict, *names):
    missing = [n for n in names if params.get(n) is None]
    if missing:
        raise CliValidationError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")


def _read_disparity(run: _Run, path: str) -> DisparityMap:
    if path.endswith(".png"):
        d, _ = io_formats.read_kitti_disparity(run.read(path))
        return d
    grid, _ = io_formats.read_pfm(run.read(path))
    if grid.channels != 1:
        raise CliValidationError(f"{path}: disparity PFM must have one channel")
    return DisparityMap(grid)


def _read_grid(run: _Run, path: str) -> Grid:
    grid, _ = io_formats.read_pfm(run.read(path))
    return grid


def _read_normal(run: _Run, path: str) -> NormalMap:
    if path.endswith(".png"):
        return NormalMap.from_array(io_formats.read_normal_png(run.read(path)).data,
                                    renormalize=True)
    grid, _ = io_formats.read_pfm(run.read(path))
    if grid.channels != 3:
        raise CliValidationError(f"{path}: normal PFM must have three channels")
    return NormalMap.from_array(grid.data, renormalize=True)


def _read_npy(run: _Run, path: str) -> np.ndarray:
    run.read(path)
    return np.load(path)


# --- commands --------------------------------------------------------------

def cmd_synth(params: dict, run: _Run) -> dict:
    _require(params, "planes", "out", "seed")
    spec_doc = json.loads(run.read(params["planes"]))
    specs = [synthetic.PlaneSpec(a=p["a"], b=p["b"], c=p["c"],
                                 region=tuple(p["region"]),
                                 texture_seed=int(p.get("texture_seed", 0)))
             for p in spec_doc]
    scene = synthetic.gen_planar_scene(
        specs, h=params["height"], w=params["width"],
        noise_sigma=params["noise_sigma"], seed=params["seed"])
    out = Path(params["out"])
    run.write(out / "left.pfm", io_formats.write_pfm(scene.left))
    run.write(out / "right.pfm", io_formats.write_pfm(scene.right))
    run.write(out / "disparity_gt.pfm", io_formats.write_pfm(scene.disparity_gt.grid))
    run.write(out / "disparity_right.pfm", io_formats.write_pfm(scene.disparity_right.grid))
    run.write(out / "normal_gt.png", io_formats.write_normal_png(scene.normal_gt))
    run.write(out / "occlusion.png", io_formats.write_mask_png(scene.occlusion))
    manifest = {
        "planes": spec_doc,
        "height": params["height"], "width": params["width"],
        "noise_sigma": params["noise_sigma"], "seed": params["seed"],
    }
    run.write(out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=2).encode())
    return {"occluded_fraction": float(np.mean(scene.occlusion.values))}


def cmd_normal_from_disp(params: dict, run: _Run) -> dict:
    _require(params, "disparity", "out_png")
    d = _read_disparity(run, params["disparity"])
    n = normals.normal_from_disparity(d)
    run.write(params["out_png"], io_formats.write_normal_png(n))
    if params.get("out_pfm"):
        run.write(params["out_pfm"], io_formats.write_pfm(n.grid))
    return {}


def cmd_normal_gt(params: dict, run: _Run) -> dict:
    _require(params, "pseudo", "sparse", "out_normal")
    d_pseudo = _read_disparity(run, params["pseudo"])
    d_sparse, valid = io_formats.read_kitti_disparity(run.read(params["sparse"]))
    bundle = normals.build_normal_gt(d_pseudo, d_sparse, valid,
                                     threshold=params["epe_threshold"])
    run.write(params["out_normal"], io_formats.write_normal_png(bundle.n_gt))
    if params.get("out_sparse_mask"):
        run.write(params["out_sparse_mask"], io_formats.write_mask_png(bundle.m_sparse))
    if params.get("out_epe_mask"):
        run.write(params["out_epe_mask"], io_formats.write_mask_png(bundle.e_index))
    return {
        "sparse_fraction": float(np.mean(bundle.m_sparse.values)),
        "epe_index_fraction": float(np.mean(bundle.e_index.values)),
    }


def cmd_warp_error(params: dict, run: _Run) -> dict:
    _require(params, "left", "right", "disparity", "out")
    left = _read_grid(run, params["left"])
    right = _read_grid(run, params["right"])
    d = _read_disparity(run, params["disparity"])
    err = warped_error(left, right, d)
    run.write(params["out"], io_formats.write_pfm(err.grid))
    if params.get("out_validity"):
        run.write(params["out_validity"], io_formats.write_mask_png(err.validity))
    return {"mean_error": float(np.mean(err.values))}


def _offsets_overlay(d_values: np.ndarray, offsets: np.ndarray, stride: int) -> np.ndarray:
    """Grayscale disparity with sampled-point markers for a grid of probe pixels."""
    h, w = d_values.shape
    lo, hi = float(np.min(d_values)), float(np.max(d_values))
    gray = np.zeros((h, w)) if hi == lo else (d_values - lo) / (hi - lo)
    img = np.repeat((gray * 255.0).astype(np.uint8)[:, :, None], 3, axis=2)
    for py in range(stride // 2, h, stride):
        for px in range(stride // 2, w, stride):
            for i, (dy, dx) in enumerate(NEIGHBOR_OFFSETS):
                sy = int(round(min(max(py + dy + offsets[py, px, i, 0], 0), h - 1)))
                sx = int(round(min(max(px + dx + offsets[py, px, i, 1], 0), w - 1)))
                img[sy, sx] = (255, 0, 0)
            img[py, px] = (0, 255, 0)
    return img


def cmd_propagate(params: dict, run: _Run) -> dict:
    _require(params, "disparity", "confidence", "out")
    d = _read_disparity(run, params["disparity"])
    conf = ConfidenceMap(_read_grid(run, params["confidence"]))
    h, w = d.values.shape

    if params.get("offsets") and params.get("affinities"):
        offsets = OffsetField(_read_npy(run, params["offsets"]))
        aff = AffinityField(_read_npy(run, params["affinities"]))
    elif params.get("normal") and params.get("error"):
        n = _read_normal(run, params["normal"])
        e_grid = _read_grid(run, params["error"])
        err = WarpedError(e_grid, Mask.from_bools(np.ones((h, w), dtype=bool)))
        offsets, aff = heuristic_offsets_from_normal(n, err, radius=params["radius"])
    else:
        raise CliValidationError(
            "guidance needed: either --offsets/--affinities arrays or --normal/--error maps")

    if params["local"] or params["unnormalized"]:
        refined = d
        for _ in range(params["steps"]):
            refined = propagate_local(refined, aff, conf,
                                      unnormalized=params["unnormalized"])
        offsets_used = OffsetField.zeros(h, w)
    else:
        refined = iterate_propagation(d, offsets, aff, conf, steps=params["steps"])
        offsets_used = offsets
    run.write(params["out"], io_formats.write_pfm(refined.grid))
    if params.get("out_viz"):
        overlay = _offsets_overlay(d.values, offsets_used.data,
                                   stride=max(8, min(h, w) // 8))
        ok, buf = cv2.imencode(".png", overlay[:, :, ::-1])
        if not ok:
            raise StereopropError("overlay encoding failed")
        run.write(params["out_viz"], buf.tobytes())
    return {"mean_change": float(np.mean(np.abs(refined.values - d.values)))}


def cmd_filter(params: dict, run: _Run) -> dict:
    _require(params, "features", "error", "affinities", "out")
    f = _read_grid(run, params["features"])
    f_e = _read_grid(run, params["error"])
    raw = _read_npy(run, params["affinities"])
    k = params["k"]
    if raw.ndim != 3 or raw.shape[2] != k * k:
        raise CliValidationError(f"affinity array must be (H, W, {k * k}) for k={k}")
    reweighted = attention_reweight(f, f_e)
    a = normalize_local_affinity(Grid(raw), mode=params["norm"])
    out = local_affinity_filter(reweighted, a)
    run.write(params["out"], io_formats.write_pfm(out))
    return {}


def cmd_loss(params: dict, run: _Run) -> dict:
    _require(params, "manifest")
    doc = json.loads(run.read(params["manifest"]))
    scales = doc.get("scales")
    if not isinstance(scales, list) or len(scales) != 4:
        raise CliValidationError("manifest must list exactly 4 scales")
    weights = losses.LossWeights(
        lambda_scale=params["lambda_scale"],
        lambda_d=params["lambda_d"], lambda_n=params["lambda_n"],
        lambda_c=params["lambda_c"], c1=params["c1"], c2=params["c2"])
    per_scale = []
    detail = []
    for entry in scales:
        d_gt = _read_disparity(run, entry["d_gt"])
        d_hat = _read_disparity(run, entry["d_hat"])
        if entry.get("valid"):
            valid = io_formats.read_mask_png(run.read(entry["valid"]))
        else:
            valid = Mask.from_bools(np.ones(d_gt.values.shape, dtype=bool))
        n_gt = _read_normal(run, entry["n_gt"])
        n_hat = _read_normal(run, entry["n_hat"])
        conf = ConfidenceMap(_read_grid(run, entry["confidence"]))
        l_d = losses.disparity_loss(d_gt, d_hat, valid)
        l_n = losses.normal_loss(n_gt, n_hat)
        l_c = losses.confidence_loss(conf, d_gt, d_hat, valid,
                                     c1=weights.c1, c2=weights.c2)
        per_scale.append((l_d, l_n, l_c))
        detail.append({"disparity": l_d, "normal": l_n, "confidence": l_c})
    total = losses.total_loss(per_scale, weights)
    return {"total": total, "scales": detail}


def cmd_eval(params: dict, run: _Run) -> dict:
    _require(params, "gt", "pred")
    if params["gt"].endswith(".png"):
        d_gt, valid = io_formats.read_kitti_disparity(run.read(params["gt"]))
    else:
        # ground-truth PFMs may mark missing pixels with infinity
        grid, _, valid = io_formats.read_pfm_masked(run.read(params["gt"]))
        if grid.channels != 1:
            raise CliValidationError(f"{params['gt']}: disparity PFM must have one channel")
        d_gt = DisparityMap(grid)
    d_hat = _read_disparity(run, params["pred"])
    if params.get("valid"):
        valid = io_formats.read_mask_png(run.read(params["valid"]))
    occlusion = None
    if params.get("occlusion"):
        occlusion = io_formats.read_mask_png(run.read(params["occlusion"]))
    report = losses.evaluate(d_gt, d_hat, valid, occlusion)
    return {"report": report.to_dict()}


def cmd_gradcheck(params: dict, run: _Run) -> dict:
    _require(params, "seed")
    results = run_gradcheck(module=params["module"], trials=params["trials"],
                            seed=params["seed"], step=params["step"])
    worst = max(v for group in results.values() for v in group.values())
    return {
        "results": results,
        "max_relative_error": worst,
        "threshold": 1e-4,
        "pass": bool(worst < 1e-4),
    }


# --- argument plumbing -----------------------------------------------------

_COMMANDS = {
    "synth": (cmd_synth, {"height": 96, "width": 160, "noise_sigma": 0.0}),
    "normal-from-disp": (cmd_normal_from_disp, {}),
    "normal-gt": (cmd_normal_gt, {"epe_threshold": 1.0}),
    "warp-error": (cmd_warp_error, {}),
    "propagate": (cmd_propagate, {"steps": 1, "radius": 2, "local": False,
                                  "unnormalized": False}),
    "filter": (cmd_filter, {"k": 3, "norm": "abs_sum"}),
    "loss": (cmd_loss, {"lambda_scale": (1.0, 0.8, 0.8, 0.6), "lambda_d": 5.0,
                        "lambda_n": 50.0, "lambda_c": 1.0, "c1": 0.5, "c2": 1.5}),
    "eval": (cmd_eval, {}),
    "gradcheck": (cmd_gradcheck, {"module": "all", "trials": 20, "step": 1e-5}),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stereoprop",
                                     description="stereo propagation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, *specs):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON file with option defaults")
        for flags, kwargs in specs:
            p.add_argument(flags, default=None, **kwargs)
        return p

    add("synth",
        ("--planes", {"help": "JSON list of plane specs"}),
        ("--out", {"help": "output directory"}),
        ("--height", {"type": int}), ("--width", {"type": int}),
        ("--noise-sigma", {"type": float}), ("--seed", {"type": int}))
    add("normal-from-disp",
        ("--disparity", {}), ("--out-png", {}), ("--out-pfm", {}))
    add("normal-gt",
        ("--pseudo", {"help": "dense pseudo disparity PFM"}),
        ("--sparse", {"help": "sparse 16-bit disparity PNG"}),
        ("--out-normal", {}), ("--out-sparse-mask", {}), ("--out-epe-mask", {}),
        ("--epe-threshold", {"type": float}))
    add("warp-error",
        ("--left", {}), ("--right", {}), ("--disparity", {}),
        ("--out", {}), ("--out-validity", {}))
    add("propagate",
        ("--disparity", {}), ("--confidence", {}),
        ("--normal", {}), ("--error", {}),
        ("--offsets", {"help": "npy (H, W, 8, 2)"}),
        ("--affinities", {"help": "npy (H, W, 8)"}),
        ("--steps", {"type": int}), ("--radius", {"type": int}),
        ("--local", {"action": "store_const", "const": True}),
        ("--unnormalized", {"action": "store_const", "const": True}),
        ("--out", {}), ("--out-viz", {}))
    add("filter",
        ("--features", {}), ("--error", {}),
        ("--affinities", {"help": "npy (H, W, k*k) raw weights"}),
        ("--k", {"type": int}), ("--norm", {"choices": ["abs_sum", "softmax"]}),
        ("--out", {}))
    add("loss",
        ("--manifest", {"help": "JSON with 4 per-scale file entries"}),
        ("--lambda-d", {"type": float}), ("--lambda-n", {"type": float}),
        ("--lambda-c", {"type": float}),
        ("--lambda-scale", {"type": lambda s: tuple(float(v) for v in s.split(","))}),
        ("--c1", {"type": float}), ("--c2", {"type": float}))
    add("eval",
        ("--gt", {}), ("--pred", {}), ("--valid", {}), ("--occlusion", {}))
    add("gradcheck",
        ("--module", {"choices": ["all", "propagation", "filtering"]}),
        ("--trials", {"type": int}), ("--seed", {"type": int}),
        ("--step", {"type": float}))
    return parser


def _merge_params(args: argparse.Namespace, defaults: dict) -> dict:
    params = dict(defaults)
    if args.config is not None:
        with open(args.config) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise CliValidationError("--config must contain a JSON object")
        params.update({k.replace("-", "_"): v for k, v in loaded.items()})
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        if value is not None:
            params[key] = value
    return params


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler, defaults = _COMMANDS[args.command]
    run = _Run()
    started = time.perf_counter()
    try:
        params = _merge_params(args, defaults)
        extra = handler(params, run)
    except (StereopropError, CliValidationError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}))
        return 1
    except OSError as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}))
        return 2
    summary = {
        "command": args.command,
        "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in params.items()},
        "inputs": run.inputs,
        "outputs": run.outputs,
        "elapsed_s": time.perf_counter() - started,
    }
    summary.update(extra)
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
