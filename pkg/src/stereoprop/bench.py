"""Benchmark of the compiled kernels against the numpy fallback.

Run as ``python -m stereoprop.bench``.  Reports best-of-N wall times per
kernel and backend plus the speedup; also double-checks that both backends
agree on the benchmark inputs.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from ._kernels import _numpy as numpy_impl

try:
    from ._kernels import _native as native_impl
except ImportError:
    native_impl = None


def _bench_inputs(h, w, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.uniform(5.0, 20.0, (h, w))
    off = rng.uniform(-2.0, 2.0, (h, w, 8, 2))
    aff = rng.standard_normal((h, w, 8))
    conf = rng.uniform(0.0, 1.0, (h, w))
    grad = rng.standard_normal((h, w))
    feat = rng.standard_normal((h, w, 16))
    raw = rng.standard_normal((h, w, 9))
    la = raw / np.maximum(np.sum(np.abs(raw), axis=2, keepdims=True), 1e-12)
    gfeat = rng.standard_normal((h, w, 16))
    fl = rng.standard_normal((h, w, 8))
    fr = rng.standard_normal((h, w, 8))
    return d, off, aff, conf, grad, feat, la, gfeat, fl, fr


def _time(fn, repeats):
    best = np.inf
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def run_bench(h: int = 192, w: int = 320, repeats: int = 3, max_disparity: int = 32) -> dict:
    d, off, aff, conf, grad, feat, la, gfeat, fl, fr = _bench_inputs(h, w)
    cases = {
        "propagate_forward": lambda impl: impl.propagate_forward(d, off, aff, conf),
        "propagate_backward": lambda impl: impl.propagate_backward(grad, d, off, aff, conf),
        "filter_forward": lambda impl: impl.filter_forward(feat, la, 3),
        "filter_backward": lambda impl: impl.filter_backward(gfeat, feat, la, 3),
        "correlation_volume": lambda impl: impl.correlation_volume(fl, fr, max_disparity),
    }
    report = {"height": h, "width": w, "repeats": repeats, "kernels": {}}
    for name, call in cases.items():
        t_np, r_np = _time(lambda: call(numpy_impl), repeats)
        entry = {"numpy_s": t_np}
        if native_impl is not None:
            t_nat, r_nat = _time(lambda: call(native_impl), repeats)
            entry["native_s"] = t_nat
            entry["speedup"] = t_np / t_nat
            a = r_np if isinstance(r_np, np.ndarray) else np.concatenate([x.ravel() for x in r_np])
            b = r_nat if isinstance(r_nat, np.ndarray) else np.concatenate([x.ravel() for x in r_nat])
            # equal -inf sentinels count as zero difference
            with np.errstate(invalid="ignore"):
                entry["max_abs_diff"] = float(np.max(np.where(a == b, 0.0, np.abs(a - b))))
        report["kernels"][name] = entry
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="compare kernel backends")
    parser.add_argument("--height", type=int, default=192)
    parser.add_argument("--width", type=int, default=320)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--json", action="store_true", help="emit the raw report as JSON")
    args = parser.parse_args(argv)
    report = run_bench(args.height, args.width, args.repeats)
    if args.json:
        print(json.dumps(report, indent=2))
        return 0
    size = f"{report['height']}x{report['width']}"
    if native_impl is None:
        print(f"native kernels not built; timing numpy fallback only ({size})")
    print(f"{'kernel':<22} {'numpy':>10} {'native':>10} {'speedup':>8} {'max|diff|':>10}")
    for name, e in report["kernels"].items():
        if "native_s" in e:
            print(f"{name:<22} {e['numpy_s'] * 1e3:>8.2f}ms {e['native_s'] * 1e3:>8.2f}ms "
                  f"{e['speedup']:>7.1f}x {e['max_abs_diff']:>10.2e}")
        else:
            print(f"{name:<22} {e['numpy_s'] * 1e3:>8.2f}ms {'-':>10} {'-':>8} {'-':>10}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
