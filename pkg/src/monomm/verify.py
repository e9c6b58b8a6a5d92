"""Oracle suites: finite-difference gradients, scan equivalence, IoU and AP."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import functional as F
from . import losses
from .dap import SENTINEL_INVALID, DepthBinMap, depth_loss
from .data.kitti import GroundTruthObject
from .dmb import deform, scan
from .eval import ap as ap_mod
from .eval.iou import bev_iou, footprint, iou2d, iou3d
from .gradcheck import finite_diff_check
from .tensor import Tensor, precision

SUITES = ("gradcheck", "scan", "iou", "ap")
SCAN_LENGTHS = (1, 2, 3, 7, 8, 64, 255, 1024)


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.suite}/{self.name}: {self.detail} ({self.seconds:.2f}s)"


# ---------------------------------------------------------------------------
# gradient checks: each case builder returns (function of the inputs, inputs)


def _t(rng, *shape, scale=1.0):
    return Tensor(rng.normal(0.0, scale, size=shape))


def _projected(fn):
    """Turn a tensor-valued op into a scalar by a fixed random projection."""

    def build(rng):
        op, inputs = fn(rng)
        probe = {}

        def scalar(*xs):
            out = op(*xs)
            if "w" not in probe:
                probe["w"] = Tensor(np.random.default_rng(1).normal(size=out.shape))
            return (out * probe["w"]).sum()

        return scalar, inputs

    return build


def _away_from(rng, shape, points, margin, scale=1.0):
    """Random values at least ``margin`` from every kink in ``points``."""
    x = rng.normal(0.0, scale, size=shape)
    for p in points:
        close = np.abs(x - p) < margin
        x[close] = p + np.sign(x[close] - p + 1e-300) * margin * (1 + rng.random(close.sum()))
    return x


@_projected
def _case_conv2d(rng):
    groups = int(rng.choice([1, 2]))
    c_in, c_out = groups * int(rng.integers(1, 3)), groups * int(rng.integers(1, 3))
    k = int(rng.choice([1, 2, 3]))
    stride, pad, dil = int(rng.integers(1, 3)), int(rng.integers(0, 2)), int(rng.integers(1, 3))
    size = dil * (k - 1) + 1 + int(rng.integers(0, 4))
    x, w, b = _t(rng, c_in, size, size + 1), _t(rng, c_out, c_in // groups, k, k), _t(rng, c_out)
    return (lambda x, w, b: F.conv2d(x, w, b, stride, pad, dil, groups)), [x, w, b]


@_projected
def _case_conv_transpose2d(rng):
    groups = int(rng.choice([1, 2]))
    c_in, c_out = groups * int(rng.integers(1, 3)), groups * int(rng.integers(1, 3))
    k, stride = int(rng.choice([1, 2, 3])), int(rng.integers(1, 3))
    pad = int(rng.integers(0, k))
    x, w, b = _t(rng, c_in, int(rng.integers(2, 5)), int(rng.integers(2, 5))), _t(rng, c_in, c_out // groups, k, k), _t(rng, c_out)
    return (lambda x, w, b: F.conv_transpose2d(x, w, b, stride, pad, 1, groups)), [x, w, b]


@_projected
def _case_max_pool(rng):
    k = int(rng.choice([2, 3]))
    shape = (int(rng.integers(1, 3)), k * int(rng.integers(1, 4)), k * int(rng.integers(1, 4)))
    # a random permutation keeps window maxima well separated
    x = Tensor(rng.permutation(np.prod(shape)).reshape(shape) * 0.1 + rng.normal(0, 1e-3, shape))
    return (lambda x: F.pool2d(x, "max", k)), [x]


@_projected
def _case_avg_pool(rng):
    k = int(rng.choice([2, 3]))
    x = _t(rng, int(rng.integers(1, 3)), k * int(rng.integers(1, 4)), k * int(rng.integers(1, 4)))
    return (lambda x: F.pool2d(x, "avg", k)), [x]


@_projected
def _case_linear(rng):
    n, d_in, d_out = (int(v) for v in rng.integers(1, 6, size=3))
    return F.linear, [_t(rng, n, d_in), _t(rng, d_in, d_out), _t(rng, d_out)]


@_projected
def _case_silu(rng):
    return F.silu, [_t(rng, *rng.integers(1, 6, size=2), scale=2.0)]


@_projected
def _case_normalize(rng):
    n, d = int(rng.integers(1, 5)), int(rng.integers(2, 7))
    return F.normalize, [_t(rng, n, d), _t(rng, d), _t(rng, d)]


@_projected
def _case_deformable_conv1d(rng):
    T, E, K = int(rng.integers(2, 8)), int(rng.integers(1, 4)), int(rng.choice([1, 3]))
    # keep sample positions away from integer grid points where interpolation has kinks
    base = rng.integers(-2, 3, size=(T, K))
    offsets = Tensor(base + rng.uniform(0.15, 0.85, size=(T, K)))
    return deform.deformable_conv1d, [_t(rng, T, E), offsets, _t(rng, E, K), _t(rng, E)]


@_projected
def _case_deformable_conv2d(rng):
    H, W, E, K = int(rng.integers(2, 5)), int(rng.integers(2, 5)), int(rng.integers(1, 3)), 9
    off = rng.integers(-1, 2, size=(H, W, K, 2)) + rng.uniform(0.15, 0.85, size=(H, W, K, 2))
    return deform.deformable_conv2d, [_t(rng, H, W, E), Tensor(off), _t(rng, E, K), _t(rng, E)]


@_projected
def _case_selective_scan(rng):
    T, E, N = int(rng.integers(1, 10)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
    delta = Tensor(rng.uniform(0.05, 0.8, size=(T, E)))
    A = Tensor(-rng.uniform(0.2, 2.0, size=(E, N)))
    return scan.selective_scan, [_t(rng, T, E), delta, A, _t(rng, T, N), _t(rng, T, N), _t(rng, E)]


def _case_focal(rng):
    shape = tuple(rng.integers(1, 6, size=2))
    p = Tensor(rng.uniform(0.05, 0.95, size=shape))
    t = rng.random(shape) < 0.5
    alpha, gamma = rng.uniform(0.1, 1.0), rng.uniform(0.0, 3.0)
    return (lambda p: losses.focal_loss(p, t, alpha, gamma)), [p]


def _case_sigmoid_focal(rng):
    shape = tuple(rng.integers(1, 6, size=2))
    t = rng.random(shape) < 0.5
    return (lambda z: losses.sigmoid_focal_loss(z, t, reduction="sum", normalizer=3.0)), [_t(rng, *shape, scale=2.0)]


def _case_smooth_l1(rng):
    shape = tuple(rng.integers(1, 6, size=2))
    delta = rng.uniform(0.3, 2.0)
    diff = _away_from(rng, shape, (-delta, 0.0, delta), 1e-3, scale=2.0)
    target = rng.normal(size=shape)
    return (lambda p: losses.smooth_l1(p, target, delta)), [Tensor(target + diff)]


def _case_depth_loss(rng):
    n_bins, h, w = int(rng.integers(2, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
    bins = rng.integers(0, n_bins, size=(h, w))
    bins[rng.random((h, w)) < 0.3] = SENTINEL_INVALID
    gt = DepthBinMap(bins, n_bins)
    return (lambda z: depth_loss(z, gt)), [_t(rng, n_bins, h, w)]


GRADCHECK_CASES: dict[str, Callable] = {
    "conv2d": _case_conv2d,
    "conv_transpose2d": _case_conv_transpose2d,
    "max_pool": _case_max_pool,
    "avg_pool": _case_avg_pool,
    "linear": _case_linear,
    "silu": _case_silu,
    "normalize": _case_normalize,
    "deformable_conv1d": _case_deformable_conv1d,
    "deformable_conv2d": _case_deformable_conv2d,
    "selective_scan": _case_selective_scan,
    "focal": _case_focal,
    "sigmoid_focal": _case_sigmoid_focal,
    "smooth_l1": _case_smooth_l1,
    "depth_loss": _case_depth_loss,
}


def gradcheck_op(builder: Callable, rng: np.random.Generator) -> float:
    """Worst relative error over every input of one random instance."""
    fn, inputs = builder(rng)
    worst = 0.0
    for i in range(len(inputs)):
        def wrt(x, i=i):
            args = [x if j == i else inp.detach() for j, inp in enumerate(inputs)]
            return fn(*args)

        worst = max(worst, finite_diff_check(wrt, inputs[i]))
    return worst


def gradcheck_suite(n_shapes: int = 20, tol: float = 1e-4, seed: int = 0, cases=None) -> list[CheckResult]:
    cases = GRADCHECK_CASES if cases is None else cases
    results = []
    with precision(64):
        for name, builder in cases.items():
            t0 = time.perf_counter()
            rng = np.random.default_rng([seed, len(name)])
            errors = [gradcheck_op(builder, rng) for _ in range(n_shapes)]
            worst = max(errors)
            results.append(CheckResult("gradcheck", name, bool(worst < tol),
                                       f"max rel err {worst:.2e} over {n_shapes} shapes (tol {tol:g})",
                                       time.perf_counter() - t0))
    return results


# ---------------------------------------------------------------------------
# scan equivalence


def random_scan_params(rng: np.random.Generator, T: int, E: int, N: int, dtype=np.float64):
    u = rng.normal(size=(T, E))
    delta = rng.uniform(0.01, 1.0, size=(T, E))
    A = -rng.uniform(0.1, 2.0, size=(E, N))
    B, C = rng.normal(size=(T, N)), rng.normal(size=(T, N))
    D = rng.normal(size=E)
    return tuple(a.astype(dtype) for a in (u, delta, A, B, C, D))


def scan_suite(lengths=SCAN_LENGTHS, trials: int = 100, tol: float = 1e-10, seed: int = 0) -> list[CheckResult]:
    results = []
    for T in lengths:
        t0 = time.perf_counter()
        rng = np.random.default_rng([seed, T])
        worst = 0.0
        for _ in range(trials):
            E, N = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            params = random_scan_params(rng, T, E, N)
            ref = scan.scan_sequential(*params)
            fast = scan.scan_blocked(*params)
            worst = max(worst, float(np.max(np.abs(fast - ref))))
        results.append(CheckResult("scan", f"T={T}", worst <= tol,
                                   f"max abs diff {worst:.2e} over {trials} draws (tol {tol:g})",
                                   time.perf_counter() - t0))
    return results


# ---------------------------------------------------------------------------
# IoU against voxel counting


def voxel_iou(a, b, grid: int = 200) -> tuple[float, float]:
    """(BEV IoU, 3-D IoU) by counting cell centres of a ``grid``-per-axis lattice.

    The lattice spans the joint bounding region of both boxes. Because each
    box is a vertical prism, the 3-D counts factor into a BEV count times a
    vertical count, which is exactly the full ``grid**3`` rasterisation.
    """
    pa, pb = footprint(a), footprint(b)
    pts = np.vstack([pa, pb])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    xs = lo[0] + (np.arange(grid) + 0.5) * (hi[0] - lo[0]) / grid
    zs = lo[1] + (np.arange(grid) + 0.5) * (hi[1] - lo[1]) / grid
    X, Z = np.meshgrid(xs, zs, indexing="ij")

    def inside(poly):
        mask = np.ones(X.shape, bool)
        for i in range(4):
            p, q = poly[i], poly[(i + 1) % 4]
            mask &= (q[0] - p[0]) * (Z - p[1]) - (q[1] - p[1]) * (X - p[0]) >= 0
        return mask

    ma, mb = inside(pa), inside(pb)
    ylo, yhi = min(a[1] - a[3], b[1] - b[3]), max(a[1], b[1])
    ys = ylo + (np.arange(grid) + 0.5) * (yhi - ylo) / grid
    va = (ys >= a[1] - a[3]) & (ys <= a[1])
    vb = (ys >= b[1] - b[3]) & (ys <= b[1])
    inter_bev = int((ma & mb).sum())
    union_bev = int(ma.sum() + mb.sum()) - inter_bev
    inter3 = inter_bev * int((va & vb).sum())
    union3 = int(ma.sum()) * int(va.sum()) + int(mb.sum()) * int(vb.sum()) - inter3
    return inter_bev / max(union_bev, 1), inter3 / max(union3, 1)


def random_box_pair(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    a = np.array([rng.uniform(-5, 5), rng.uniform(1, 2), rng.uniform(5, 40), rng.uniform(0.8, 2.0),
                  rng.uniform(0.5, 2.0), rng.uniform(0.5, 4.5), rng.uniform(-np.pi, np.pi)])
    b = a.copy()
    b[:3] += rng.normal(0, [0.6, 0.2, 0.6])
    b[3:6] *= rng.uniform(0.7, 1.3, size=3)
    b[6] = rng.uniform(-np.pi, np.pi) if rng.random() < 0.5 else a[6] + rng.normal(0, 0.3)
    return a, b


def iou_suite(pairs: int = 200, tol: float = 0.01, grid: int = 200, seed: int = 0) -> list[CheckResult]:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst_bev = worst_3d = 0.0
    for _ in range(pairs):
        a, b = random_box_pair(rng)
        vb, v3 = voxel_iou(a, b, grid)
        worst_bev = max(worst_bev, abs(bev_iou(a, b) - vb))
        worst_3d = max(worst_3d, abs(iou3d(a, b) - v3))
    dt = time.perf_counter() - t0
    t1 = time.perf_counter()
    sym = 0.0
    for _ in range(pairs):
        a, b = random_box_pair(rng)
        sym = max(sym, abs(bev_iou(a, b) - bev_iou(b, a)), abs(iou3d(a, b) - iou3d(b, a)),
                  abs(iou2d(a[:4], b[:4]) - iou2d(b[:4], a[:4])))
    return [
        CheckResult("iou", "bev_vs_voxel", worst_bev <= tol, f"max |diff| {worst_bev:.4f} over {pairs} pairs", dt / 2),
        CheckResult("iou", "3d_vs_voxel", worst_3d <= tol, f"max |diff| {worst_3d:.4f} over {pairs} pairs", dt / 2),
        CheckResult("iou", "symmetry", sym < 1e-9, f"max asymmetry {sym:.1e}", time.perf_counter() - t1),
    ]


# ---------------------------------------------------------------------------
# AP against an exhaustive precision/recall computation


def _obj(cls, box, score=None, occlusion=0, truncation=0.0):
    return GroundTruthObject(cls, truncation, occlusion, 0.0, tuple(box), (1.5, 1.6, 3.9), (0.0, 1.5, 10.0), 0.0, score)


def random_ap_instance(rng: np.random.Generator, max_dets: int = 10, max_gts: int = 5, frames: int = 2):
    """Small multi-frame instance of 2-D boxes, with occasional hard or DontCare labels."""
    dets, gts = [], []
    for _ in range(frames):
        g = []
        for _ in range(int(rng.integers(0, max_gts + 1))):
            x, y = rng.uniform(0, 200, size=2)
            w, h = rng.uniform(20, 60, size=2)
            kind = rng.random()
            cls = "DontCare" if kind < 0.1 else "Car"
            occ = 2 if kind > 0.85 else 0
            g.append(_obj(cls, (x, y, x + w, y + h), occlusion=occ))
        gts.append(g)
        dets.append([])
    for _ in range(int(rng.integers(0, max_dets + 1))):
        fi = int(rng.integers(0, frames))
        if gts[fi] and rng.random() < 0.7:
            base = np.array(gts[fi][int(rng.integers(0, len(gts[fi])))].bbox2d)
            box = base + rng.normal(0, 6, size=4)
        else:
            x, y = rng.uniform(0, 200, size=2)
            box = np.array([x, y, x + rng.uniform(15, 60), y + rng.uniform(15, 60)])
        if box[2] <= box[0] + 1 or box[3] <= box[1] + 1:
            box[2:] = box[:2] + 30
        # distinct, exactly representable scores avoid order ambiguity
        dets[fi].append(_obj("Car", tuple(box), score=float(rng.integers(1, 10**6)) / 10**6))
    return dets, gts


def brute_force_ap(dets, gts, cls: str, thr: float, bucket=ap_mod.Difficulty.MODERATE,
                   rules=ap_mod.DEFAULT_RULES, n_recall: int = 40) -> Fraction:
    """AP from scratch: re-match every score-ranked prefix, then take the best
    precision at each recall level over all prefixes."""
    ranked = sorted(((d.score, fi, di) for fi, f in enumerate(dets) for di, d in enumerate(f) if d.cls == cls),
                    key=lambda t: (-t[0], t[1], t[2]))
    min_h = rules[min(int(bucket), 2)].min_height

    def status(g):
        if g.cls == "DontCare":
            return "dontcare"
        if g.cls != cls:
            return "ignored" if g.cls in ap_mod.NEIGHBOUR_CLASSES.get(cls, ()) else "other"
        return "valid" if ap_mod.difficulty(g, rules) <= bucket else "ignored"

    n_gt = sum(status(g) == "valid" for f in gts for g in f)
    if n_gt == 0:
        return Fraction(0)
    curve = []
    for k in range(1, len(ranked) + 1):
        used = set()
        tp = fp = 0
        for _, fi, di in ranked[:k]:
            d = dets[fi][di]
            scored = [(iou2d(d.bbox2d, g.bbox2d), -j, j) for j, g in enumerate(gts[fi])
                      if status(g) == "valid" and (fi, j) not in used]
            scored = [s for s in scored if s[0] >= thr]
            if scored:
                used.add((fi, max(scored)[2]))
                tp += 1
                continue
            hit_ignored = next((j for j, g in enumerate(gts[fi]) if status(g) == "ignored"
                                and (fi, j) not in used and iou2d(d.bbox2d, g.bbox2d) >= thr), None)
            if hit_ignored is not None:
                used.add((fi, hit_ignored))
                continue
            area = (d.bbox2d[2] - d.bbox2d[0]) * (d.bbox2d[3] - d.bbox2d[1])
            covered = False
            for g in gts[fi]:
                if status(g) == "dontcare":
                    iw = min(d.bbox2d[2], g.bbox2d[2]) - max(d.bbox2d[0], g.bbox2d[0])
                    ih = min(d.bbox2d[3], g.bbox2d[3]) - max(d.bbox2d[1], g.bbox2d[1])
                    covered |= iw > 0 and ih > 0 and iw * ih / area >= thr
            if d.height2d < min_h or covered:
                continue
            fp += 1
        if tp + fp:
            curve.append((Fraction(tp, n_gt), Fraction(tp, tp + fp)))
    total = Fraction(0)
    for r in range(1, n_recall + 1):
        total += max([p for rec, p in curve if rec >= Fraction(r, n_recall)], default=Fraction(0))
    return total / n_recall


def ap_suite(trials: int = 100, seed: int = 0) -> list[CheckResult]:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(trials):
        dets, gts = random_ap_instance(rng)
        got = ap_mod.ap40(dets, gts, "Car", "2d", 0.5)
        if got != float(brute_force_ap(dets, gts, "Car", 0.5)):
            mismatches += 1
    res = [CheckResult("ap", "brute_force", mismatches == 0, f"{mismatches}/{trials} mismatches",
                       time.perf_counter() - t0)]
    t1 = time.perf_counter()
    gts = [[_obj("Car", (10, 10, 60, 60)), _obj("Car", (100, 20, 150, 80))], [_obj("Car", (5, 5, 70, 55))]]
    perfect = [[_obj(g.cls, g.bbox2d, score=0.9) for g in f] for f in gts]
    vals = [ap_mod.ap40(perfect, gts, "Car", k, 0.7) for k in ("2d", "bev", "3d")]
    empty = ap_mod.ap40([[], []], gts, "Car", "3d", 0.7)
    res.append(CheckResult("ap", "fixtures", vals == [1.0, 1.0, 1.0] and empty == 0.0,
                           f"perfect={vals} empty={empty}", time.perf_counter() - t1))
    return res


SUITE_FUNCTIONS: dict[str, Callable[[], list[CheckResult]]] = {
    "gradcheck": gradcheck_suite,
    "scan": scan_suite,
    "iou": iou_suite,
    "ap": ap_suite,
}


def run_suite(name: str, seed: int = 0) -> list[CheckResult]:
    if name == "all":
        return [r for s in SUITES for r in SUITE_FUNCTIONS[s](seed=seed)]
    if name not in SUITE_FUNCTIONS:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES + ('all',))}")
    return SUITE_FUNCTIONS[name](seed=seed)


# ---------------------------------------------------------------------------
# scan benchmark


@dataclass
class BenchRow:
    T: int
    sequential: float
    blocked: float
    max_rel_diff: float

    @property
    def speedup(self) -> float:
        return self.sequential / self.blocked if self.blocked > 0 else math.inf


def _best_time(fn, repeats: int) -> float:
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def scan_bench(lengths=(1, 64, 256, 1024), E: int = 64, N: int = 16, repeats: int = 5, seed: int = 0,
               dtype=np.float32) -> list[BenchRow]:
    """Best-of-``repeats`` wall time of both scan paths, plus their relative disagreement."""
    rows = []
    rng = np.random.default_rng(seed)
    for T in lengths:
        params = random_scan_params(rng, T, E, N, dtype)
        ref = scan.scan_sequential(*params)
        fast = scan.scan_blocked(*params)
        rel = float(np.max(np.abs(fast - ref)) / max(float(np.max(np.abs(ref))), 1e-30))
        t_seq = _best_time(lambda: scan.scan_sequential(*params), repeats)
        t_blk = _best_time(lambda: scan.scan_blocked(*params), repeats)
        rows.append(BenchRow(T, t_seq, t_blk, rel))
    return rows
