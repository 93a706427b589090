"""Acceptance suite: one pass/fail line per criterion, printed in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
Timings are wall clock, taken after one warm-up call so numba compilation is excluded.
"""

import json
import sys
import time
from fractions import Fraction

import numpy as np

from helpers import projected, random_rotation, random_scene
from oracles import exact_window, finite_difference_jacobian, monte_carlo_covariance, ply_bytes
from splatlift.camera_io import CameraView, load_colmap_bundle, write_colmap_binary, write_colmap_text
from splatlift.cli import main
from splatlift.evaluate import compare_masks, evaluate_view
from splatlift.geometry import CameraExtrinsics, CameraIntrinsics, GaussianSplat, covariance_world, projection_jacobian
from splatlift.mask_io import Mask2D
from splatlift.rasterizer import composite
from splatlift.scene_io import load_splat_ply, write_splat_ply
from splatlift.synth import SynthSpec, benchmark_scene, generate
from splatlift.uplift import statistical_filter, statistical_filter_stages, uplift_mask, zbuffer_select


def _membership_iou(selected, members):
    a, b = set(np.asarray(selected).tolist()), set(np.asarray(members).tolist())
    return len(a & b) / len(a | b) if a | b else 1.0


# 1. projection Jacobian and world covariance against independent oracles
def test_criterion_1_math_oracles(verdict):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst_j = 0.0
    for _ in range(1000):
        p = np.array([rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0.1, 20)])
        fx, fy = rng.uniform(50, 3000, 2)
        K = CameraIntrinsics(fx, fy, rng.uniform(0, 1000), rng.uniform(0, 800), 1000, 800)
        J = projection_jacobian(p, K)
        ref = finite_difference_jacobian(p, K.fx, K.fy, K.cx, K.cy)
        worst_j = max(worst_j, np.linalg.norm(J - ref) / np.linalg.norm(ref))
    worst_c = 0.0
    for _ in range(20):
        s, q = rng.normal(-1, 0.7, 3), rng.normal(size=4)
        got = covariance_world(GaussianSplat(np.zeros(3), s, q, 0.0, np.zeros(3)))
        ref = monte_carlo_covariance(s, q, 1_000_000, rng)
        worst_c = max(worst_c, np.linalg.norm(got - ref) / np.linalg.norm(ref))
    dt = time.perf_counter() - t0
    ok = worst_j < 1e-4 and worst_c < 0.02 and dt < 30
    assert verdict(1, ok, f"jacobian max rel err {worst_j:.2e} (<1e-4), covariance max rel Frobenius err "
                          f"{worst_c:.4f} (<0.02), {dt:.2f} s (<30)")


# 2. hand-simulated z-buffer traces
def test_criterion_2_zbuffer_traces(verdict):
    full = Mask2D(np.ones((21, 21), bool))
    zbuffer_select(projected([(1.5, 1.5)], [1.0], [0.5]), full)  # warm-up
    t0 = time.perf_counter()
    cases = [
        ("single splat", projected([(10.5, 10.5)], [1.0], [0.3]), [0]),
        ("front 0.99 / back 0.5", projected([(10.5, 10.5)] * 2, [1.0, 2.0], [0.99, 0.5]), [0]),
        ("front 0.10 / back 0.5", projected([(10.5, 10.5)] * 2, [1.0, 2.0], [0.10, 0.5]), [0]),
        ("back moved 5 sigma", projected([(10.5, 10.5), (15.5, 10.5)], [1.0, 2.0], [0.10, 0.5]), [0, 1]),
    ]
    got = {name: zbuffer_select(g, full)[0].tolist() for name, g, _ in cases}
    betas = [zbuffer_select(cases[1][1], full)[1].beta, zbuffer_select(cases[2][1], full)[1].beta]
    dt = time.perf_counter() - t0
    ok = all(got[name] == want for name, _, want in cases) and betas == [0.99, 0.10] and dt < 1
    detail = "; ".join(f"{name} -> accepted {got[name]}" for name, _, _ in cases)
    assert verdict(2, ok, f"{detail}; beta {betas}; {dt * 1e3:.1f} ms (<1 s)")


# 3. statistical filter bounds, decided in exact arithmetic
def test_criterion_3_filter_exactness(verdict):
    rng = np.random.default_rng(3)
    statistical_filter(projected([(0, 0)], [1.0], [0.5]), [0])
    t0 = time.perf_counter()
    violations = mismatches = identity_failures = checked = 0
    for _ in range(100):
        n = int(rng.integers(2, 200))
        g = projected(np.zeros((n, 2)), rng.lognormal(1, 0.6, n), rng.uniform(0.01, 0.99, n))
        sel = np.sort(rng.choice(n, int(rng.integers(1, n + 1)), replace=False))
        for k in (1.0, 2.0, 3.0):
            after_depth, kept = statistical_filter_stages(g, sel, k)
            depth_ok = dict(zip(sel.tolist(), exact_window(g.depth[sel], k)))
            alpha_ok = dict(zip(after_depth.tolist(), exact_window(g.alpha[after_depth], k)))
            violations += sum(not depth_ok[i] for i in after_depth.tolist())
            violations += sum(not alpha_ok.get(i, False) for i in kept.tolist())
            want_d = [i for i in sel.tolist() if depth_ok[i]]
            mismatches += after_depth.tolist() != want_d or kept.tolist() != [i for i in want_d if alpha_ok[i]]
            checked += len(kept)
        identity_failures += statistical_filter(g, sel, 1e9).tolist() != sel.tolist()
    dt = time.perf_counter() - t0
    ok = violations == 0 and mismatches == 0 and identity_failures == 0 and dt < 5
    assert verdict(3, ok, f"{checked} retained splats checked, {violations} bound violations "
                          f"({mismatches} retained-set mismatches vs exact oracle), "
                          f"{identity_failures} identity failures at sigma_k=1e9, {dt:.2f} s (<5)")


# 4. end-to-end synthetic oracle
def test_criterion_4_synthetic_oracle(verdict):
    warm = generate(SynthSpec(n_foreground=20, n_background=50, width=64, height=48, focal=60.0))
    uplift_mask(warm.scene, warm.front_view, warm.masks[warm.front_view.image_name])
    t0 = time.perf_counter()
    cw = generate(SynthSpec(preset="cluster-wall", seed=0, n_foreground=500, n_background=4500))
    v = cw.front_view
    res = uplift_mask(cw.scene, v, cw.masks[v.image_name])
    iou = _membership_iou(res.selected, cw.group("foreground"))

    fl = generate(SynthSpec(preset="floaters", seed=0))
    v = fl.front_view
    res = uplift_mask(fl.scene, v, fl.masks[v.image_name])
    floaters, fg = fl.group("floater"), fl.group("foreground")
    removed = 1 - np.isin(floaters, res.selected).mean()
    kept = np.isin(fg, res.selected).mean()
    reached = int(np.isin(floaters, res.zbuffer).sum())
    dt = time.perf_counter() - t0
    ok = iou >= 0.9 and removed >= 0.95 and kept >= 0.95 and dt < 10
    assert verdict(4, ok, f"cluster-wall membership IoU {iou:.4f} (>=0.9); floaters removed {removed:.1%} "
                          f"({reached} reached the filter) (>=95%), foreground kept {kept:.1%} (>=95%); "
                          f"{dt:.2f} s (<10)")


# 5. multi-view consistency
def test_criterion_5_multiview(verdict, cluster_wall):
    s = cluster_wall
    front = s.front_view
    res = uplift_mask(s.scene, front, s.masks[front.image_name])
    base = evaluate_view(s.scene, front, res.selected, s.masks[front.image_name]).iou
    unseen = [s.views[s.spec.front_index - 1], s.views[s.spec.front_index + 1]]
    ious = {v.image_name: evaluate_view(s.scene, v, res.selected, s.masks[v.image_name]).iou for v in unseen}
    ok = all(x >= 0.75 and abs(x - base) <= 0.15 for x in ious.values())
    per = ", ".join(f"{k} {x:.4f}" for k, x in ious.items())
    assert verdict(5, ok, f"input view IoU {base:.4f}; unseen {per} (each >=0.75 and within 0.15)")


# 6. runtime
def test_criterion_6_performance(verdict):
    out = {}
    for n, limit in ((1_000_000, 3.0), (10_000, 0.3)):
        s, mask = benchmark_scene(n)
        uplift_mask(s.scene, s.front_view, mask)  # warm-up
        t0 = time.perf_counter()
        uplift_mask(s.scene, s.front_view, mask)
        out[n] = (time.perf_counter() - t0, limit, mask.count / mask.bits.size)
    ok = all(dt <= limit and cover <= 0.05 for dt, limit, cover in out.values())
    detail = "; ".join(f"{n:,} splats {dt:.3f} s (<={limit}), mask {cover:.1%} (<=5%)" for n, (dt, limit, cover) in out.items())
    assert verdict(6, ok, detail)


# 7. two-splat compositing closed form
def test_criterion_7_compositing(verdict):
    c1, c2 = np.array([0.9, 0.3, 0.1]), np.array([0.2, 0.6, 1.0])
    t = composite(projected([(4.5, 4.5)] * 2, [1.0, 2.0], [0.6, 0.8]), [c1, c2], 9, 9)
    err_c = np.abs(t.rgb[4, 4] - (0.6 * c1 + 0.32 * c2)).max()
    err_a = abs(t.alpha_acc[4, 4] - 0.92)
    ok = err_c <= 1e-6 and err_a <= 1e-6
    assert verdict(7, ok, f"color err {err_c:.1e}, alpha_acc err {err_a:.1e} (<=1e-6)")


# 8. format round-trips and worker determinism
def _strip(doc):
    doc = {k: v for k, v in doc.items() if k not in ("timings_ms", "outputs")}
    doc["config"] = {k: v for k, v in doc["config"].items() if k != "workers"}
    return doc


def test_criterion_8_roundtrips(verdict, tmp_path):
    rng = np.random.default_rng(8)
    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "f_rest_0", "f_rest_1", "opacity",
             "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    rows = [tuple(rng.normal(size=len(names)).astype(np.float32).tolist()) for _ in range(64)]
    fixture = tmp_path / "fixture.ply"
    fixture.write_bytes(ply_bytes(rows, names))
    write_splat_ply(load_splat_ply(fixture), tmp_path / "again.ply")
    ply_ok = fixture.read_bytes() == (tmp_path / "again.ply").read_bytes()
    # header comments are not carried over, but the vertex records must survive bit for bit
    commented = tmp_path / "commented.ply"
    commented.write_bytes(ply_bytes(rows, names, extra_header="comment exported by a trainer"))
    first = load_splat_ply(commented)
    write_splat_ply(first, tmp_path / "commented_again.ply")
    ply_ok &= first.records.tobytes() == load_splat_ply(tmp_path / "commented_again.ply").records.tobytes()
    scene = random_scene(rng, 500, with_rest=True)
    write_splat_ply(scene, tmp_path / "r1.ply")
    write_splat_ply(load_splat_ply(tmp_path / "r1.ply"), tmp_path / "r2.ply")
    ply_ok &= (tmp_path / "r1.ply").read_bytes() == (tmp_path / "r2.ply").read_bytes()

    views = [CameraView(f"v{i}.png", CameraIntrinsics(rng.uniform(100, 900), rng.uniform(100, 900), 320.5, 240.25, 640, 480),
                        CameraExtrinsics(random_rotation(rng), rng.normal(size=3))) for i in range(6)]
    write_colmap_text(views, tmp_path / "txt")
    write_colmap_binary(views, tmp_path / "bin")
    vt, vb = load_colmap_bundle(tmp_path / "txt"), load_colmap_bundle(tmp_path / "bin")
    sfm_err = max(
        max(np.abs(a.extrinsics.rotation - b.extrinsics.rotation).max(),
            np.abs(a.extrinsics.translation - b.extrinsics.translation).max(),
            np.abs(a.intrinsics.K - b.intrinsics.K).max())
        for a, b in zip(vt, vb)
    )
    sfm_ok = len(vt) == len(vb) == 6 and [v.image_name for v in vt] == [v.image_name for v in vb] and sfm_err <= 1e-9

    synth = tmp_path / "synth"
    main(["synth", "--out", str(synth)])
    docs = []
    for w in (1, 8):
        code = main(["uplift", "--scene", str(synth / "scene.ply"), "--cameras", str(synth / "sparse"),
                     "--view", "cam_02.png", "--mask", str(synth / "masks" / "cam_02.png"),
                     "--out", str(tmp_path / f"w{w}"), "--workers", str(w)])
        assert code == 0
        docs.append(json.loads((tmp_path / f"w{w}" / "indices.json").read_text()))
    sel_bytes = [json.dumps(d["selected"]).encode() for d in docs]
    det_ok = sel_bytes[0] == sel_bytes[1] and _strip(docs[0]) == _strip(docs[1])

    ok = ply_ok and sfm_ok and det_ok
    assert verdict(8, ok, f"PLY bit identity {ply_ok}; SfM text/binary max diff {sfm_err:.1e} (<=1e-9); "
                          f"workers 1 vs 8 identical selection and document {det_ok}")


# 9. metric identities
def test_criterion_9_metrics(verdict):
    rng = np.random.default_rng(9)
    pairs = bad = 0
    while pairs < 1000:
        shape = tuple(rng.integers(4, 40, 2))
        a = Mask2D(rng.uniform(size=shape) < rng.uniform())
        b = Mask2D(rng.uniform(size=shape) < rng.uniform())
        r = compare_masks(a, b)
        if r.tp + r.fp + r.fn == 0:
            continue
        pairs += 1
        iou = Fraction(r.tp, r.tp + r.fp + r.fn)
        exact = Fraction(2 * r.tp, 2 * r.tp + r.fp + r.fn) == 2 * iou / (1 + iou)
        bad += not (exact and abs(r.f1 - 2 * r.iou / (1 + r.iou)) <= 1e-12)
    sa = np.zeros((100, 100), bool)
    sb = np.zeros((100, 100), bool)
    sa[20:30, 20:30] = True
    sb[20:30, 25:35] = True
    sq = compare_masks(Mask2D(sa), Mask2D(sb))
    sq_ok = (sq.iou, sq.f1, sq.accuracy) == (1 / 3, 0.5, 0.99)
    ok = bad == 0 and sq_ok
    assert verdict(9, ok, f"F1 identity failures {bad}/{pairs}; shifted square IoU {sq.iou!r} F1 {sq.f1!r} "
                          f"accuracy {sq.accuracy!r}")


if __name__ == "__main__":
    import pytest

    sys.exit(pytest.main([__file__, "-q"]))
