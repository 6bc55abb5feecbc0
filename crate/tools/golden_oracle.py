#!/usr/bin/env python3
"""Generate the golden 5-sample fixture and its expected pipeline outputs.

This is an independent reference implementation written with numpy/scipy.
It shares no code with the Rust engine: connected components come from
scipy.ndimage.label, label upsampling from np.repeat, LayerNorm from
np.mean/np.var.

Usage: python3 tools/golden_oracle.py [OUT_DIR]
(default OUT_DIR: crates/core/tests/fixtures/golden)
"""

import json
import math
import os
import struct
import sys

import numpy as np
from scipy import ndimage

D_STAR, D, P, H, W, M = 16, 8, 7, 56, 56, 4
LAYERS = [8, 10]
DEFAULTS = {"layer": 10, "delta": 0.5, "alpha": 0.5, "gamma": 0.5}
LN_EPS = 1e-5
SEED = 20241018
STEP = 0.05

# ---------------------------------------------------------------- CPT1 I/O

DTYPES = {np.float32: (0, "<f4"), np.uint8: (1, "u1"), np.uint32: (2, "<u4")}


def write_cpt(path, arr):
    arr = np.ascontiguousarray(arr)
    code, fmt = DTYPES[arr.dtype.type]
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "wb") as f:
        f.write(b"CPT1")
        f.write(bytes([code, arr.ndim]))
        for dim in arr.shape:
            f.write(struct.pack("<I", dim))
        f.write(arr.astype(fmt).tobytes())


def read_cpt(path):
    with open(path, "rb") as f:
        data = f.read()
    assert data[:4] == b"CPT1"
    code, ndim = data[4], data[5]
    dims = struct.unpack("<" + "I" * ndim, data[6 : 6 + 4 * ndim])
    fmt = {0: "<f4", 1: "u1", 2: "<u4"}[code]
    return np.frombuffer(data[6 + 4 * ndim :], dtype=fmt).reshape(dims)


# ------------------------------------------------------- reference pipeline


def layer_norm(x, g, b):
    mu = np.mean(x, axis=-1, keepdims=True)
    var = np.var(x, axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * g + b


def cos_rows(a, t):
    na = np.linalg.norm(a, axis=-1)
    nt = np.linalg.norm(t)
    out = np.zeros(a.shape[:-1])
    ok = na > 0
    out[ok] = (a[ok] @ t) / (na[ok] * nt)
    return np.clip(out, -1.0, 1.0)


def raw_map(patches, e_ctx, g, b, w):
    proj = layer_norm(-patches.astype(np.float64), g, b) @ w
    return cos_rows(proj, e_ctx)


def normalize(m):
    lo, hi = m.min(), m.max()
    if hi - lo <= 0:
        return np.zeros_like(m)
    return (m - lo) / (hi - lo)


FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def canonical_labels(binary):
    lab, k = ndimage.label(binary, structure=FOUR)
    # Renumber by first raster occurrence.
    order = {}
    out = np.zeros_like(lab, dtype=np.uint32)
    for idx, v in enumerate(lab.ravel()):
        if v and v not in order:
            order[v] = len(order) + 1
    for old, new in order.items():
        out[lab == old] = new
    return out, k


def comap(m, delta):
    n = normalize(m)
    step = 0
    while True:
        cur = delta - step * STEP
        b = n > cur
        if b.any() or delta - (step + 1) * STEP < 0:
            break
        step += 1
    labels, k = canonical_labels(b)
    up = np.repeat(np.repeat(labels, H // P, axis=0), W // P, axis=1)
    return labels, int(k), cur, up


def iou_counts(p, g):
    return int(np.sum(p & g)), int(np.sum(p | g))


def iou(p, g):
    i, u = iou_counts(p, g)
    return 1.0 if u == 0 else i / u


def evaluate(sample, params, delta, alpha, gamma):
    g, b, w = params
    e_ctx = gamma * sample["e_sen"].astype(np.float64) + (1 - gamma) * sample["e_noun"].astype(np.float64)
    m = raw_map(sample["patches"], e_ctx, g, b, w)
    proj_norms = np.linalg.norm(layer_norm(-sample["patches"].astype(np.float64), g, b) @ w, axis=-1)
    labels, k, delta_used, up = comap(m, delta)
    e_img = sample["e_img"].astype(np.float64)
    s_pos = cos_rows(e_img, e_ctx)
    e_neg = sample.get("e_neg")
    s_neg = None if e_neg is None else cos_rows(e_img, e_neg.astype(np.float64))
    masks = sample["masks"].astype(bool)
    fg = up > 0
    overlaps = []
    for mk in masks:
        if k == 0:
            overlaps.append(0.0)
        else:
            i, u = iou_counts(mk, fg)
            overlaps.append(i / u)
    ids = list(range(M))
    sorted_ids = sorted(ids, key=lambda i: (-s_pos[i], i))
    clustered = sorted(ids, key=lambda i: (-overlaps[i], -s_pos[i], i))
    k_used = min(max(1, k), M)
    topk = [sorted_ids[0]] + [i for i in clustered if i != sorted_ids[0]][: k_used - 1]
    guided = sample["spatial_cue"] is not None and s_neg is not None
    final = [s_pos[i] - alpha * s_neg[i] if guided else s_pos[i] for i in ids]
    final_id = sorted(topk, key=lambda i: (-final[i], i))[0]
    gt = sample["gt"].astype(bool)
    inter, union = iou_counts(masks[final_id], gt)
    img_norms = np.linalg.norm(e_img, axis=-1)
    return {
        "spatial_cue": sample["spatial_cue"],
        "guidance_fallback": sample["spatial_cue"] is not None and s_neg is None,
        "zero_norm_patches": int(np.sum(proj_norms == 0)),
        "zero_norm_masks": int(np.sum(img_norms == 0)),
        "raw_map": m.ravel().tolist(),
        "labels": labels.ravel().tolist(),
        "clusters": k,
        "delta_used": delta_used,
        "s_pos": s_pos.tolist(),
        "s_neg": None if s_neg is None else s_neg.tolist(),
        "overlaps": overlaps,
        "final_scores": final,
        "sorted_ids": sorted_ids,
        "clustered_ids": clustered,
        "topk_ids": topk,
        "k_used": k_used,
        "final_id": final_id,
        "spatial_guided": guided,
        "iou": iou(masks[final_id], gt),
        "topk_oracle_iou": max(iou(masks[i], gt) for i in topk),
        "upper_bound_iou": max(iou(mk, gt) for mk in masks),
        "intersection": inter,
        "union": union,
    }


def summarize(results):
    n = len(results)
    ti = sum(r["intersection"] for r in results)
    tu = sum(r["union"] for r in results)
    return {
        "miou": sum(r["iou"] for r in results) / n,
        "oiou": ti / tu,
        "topk_oracle_miou": sum(r["topk_oracle_iou"] for r in results) / n,
        "upper_bound_miou": sum(r["upper_bound_iou"] for r in results) / n,
        "mean_clusters": sum(r["clusters"] for r in results) / n,
    }


# ------------------------------------------------------------------ report


def fmt6(x):
    s = "%.6f" % x
    return "0.000000" if s == "-0.000000" else s


def ids_text(ids):
    return "[" + ", ".join(str(i) for i in ids) + "]"


def group_text(name, rs):
    out = f"\n[groups.{name}]\n"
    if not rs:
        return out + "samples = 0\n"
    summ = summarize(rs)
    return out + f"samples = {len(rs)}\nmiou = {fmt6(summ['miou'])}\noiou = {fmt6(summ['oiou'])}\n"


def render_report(model, cfg, results):
    results = sorted(results, key=lambda r: r["id"])
    summ = summarize(results)
    lines = [
        "# copatch run report",
        'format = "copatch-report/1"',
        f"model = {json.dumps(model)}",
        f"layer = {cfg['layer']}",
        f"delta = {fmt6(cfg['delta'])}",
        f"alpha = {fmt6(cfg['alpha'])}",
        f"gamma = {fmt6(cfg['gamma'])}",
        'topk = "clusters"',
        "connectivity = 4",
        'overlap_metric = "union-iou"',
        f"samples = {len(results)}",
        "skipped = 0",
        f"miou = {fmt6(summ['miou'])}",
        f"oiou = {fmt6(summ['oiou'])}",
        f"topk_oracle_miou = {fmt6(summ['topk_oracle_miou'])}",
        f"upper_bound_miou = {fmt6(summ['upper_bound_miou'])}",
        f"mean_clusters = {fmt6(summ['mean_clusters'])}",
        f"total_intersection = {sum(r['intersection'] for r in results)}",
        f"total_union = {sum(r['union'] for r in results)}",
        f"zero_norm_patches = {sum(r['zero_norm_patches'] for r in results)}",
        f"zero_norm_masks = {sum(r['zero_norm_masks'] for r in results)}",
        f"guidance_fallbacks = {sum(r['guidance_fallback'] for r in results)}",
        f"empty_pairs = {sum(r['union'] == 0 for r in results)}",
    ]
    out = "\n".join(lines) + "\n"
    out += group_text("spatial", [r for r in results if r["spatial_cue"] is not None])
    out += group_text("non_spatial", [r for r in results if r["spatial_cue"] is None])
    for r in results:
        out += "\n[[sample]]\n"
        out += f"id = {json.dumps(r['id'])}\n"
        if r["spatial_cue"] is not None:
            out += f"spatial_cue = {json.dumps(r['spatial_cue'])}\n"
        out += f"final_id = {r['final_id']}\nk_used = {r['k_used']}\nclusters = {r['clusters']}\n"
        for key in ["delta_used", "iou", "topk_oracle_iou", "upper_bound_iou"]:
            out += f"{key} = {fmt6(r[key])}\n"
        out += f"intersection = {r['intersection']}\nunion = {r['union']}\n"
        out += f"spatial_guided = {str(r['spatial_guided']).lower()}\n"
        out += f"zero_norm_patches = {r['zero_norm_patches']}\n"
        for key in ["sorted_ids", "clustered_ids", "topk_ids"]:
            out += f"{key} = {ids_text(r[key])}\n"
        out += "scores = [\n"
        for i in range(len(r["s_pos"])):
            neg = "" if r["s_neg"] is None else f", s_neg = {fmt6(r['s_neg'][i])}"
            out += (f"  {{ id = {i}, s_pos = {fmt6(r['s_pos'][i])}{neg}, overlap = {fmt6(r['overlaps'][i])}, "
                    f"final = {fmt6(r['final_scores'][i])} }},\n")
        out += "]\n"
    return out


# ---------------------------------------------------------------- rendering

STOPS = [(0, (0, 0, 128)), (64, (0, 0, 255)), (128, (0, 255, 0)), (192, (255, 255, 0)), (255, (255, 0, 0))]


def color(q):
    i = max(j for j, (s, _) in enumerate(STOPS) if s <= q)
    i = min(i, len(STOPS) - 2)
    (q0, c0), (q1, c1) = STOPS[i], STOPS[i + 1]
    span, t = q1 - q0, q - q0
    return bytes((2 * (a * span + (b - a) * t) + span) // (2 * span) for a, b in zip(c0, c1))


def src_index(dst, n_in, n_out):
    scale = n_in / n_out
    src = max((dst + 0.5) * scale - 0.5, 0.0)
    i0 = min(int(math.floor(src)), n_in - 1)
    i1 = i0 + 1 if i0 + 1 < n_in else i0
    return i0, i1, src - i0


def bilinear(m, h, w):
    out = np.zeros((h, w))
    for y in range(h):
        y0, y1, ly = src_index(y, m.shape[0], h)
        for x in range(w):
            x0, x1, lx = src_index(x, m.shape[1], w)
            top = m[y0, x0] + lx * (m[y0, x1] - m[y0, x0])
            bot = m[y1, x0] + lx * (m[y1, x1] - m[y1, x0])
            out[y, x] = top + ly * (bot - top)
    return out


def render_raw(m):
    up = bilinear(m.reshape(P, P), H, W)
    px = bytearray(b"P6\n%d %d\n255\n" % (W, H))
    for v in up.ravel():
        t = min(max((v + 1.0) / 2.0, 0.0), 1.0)
        px += color(int(math.floor(t * 255.0 + 0.5)))
    return bytes(px)


# ------------------------------------------------------- fixture synthesis


def rect(y0, y1, x0, x1):
    m = np.zeros((H, W), dtype=np.uint8)
    m[y0:y1, x0:x1] = 1
    return m


def bumps_field(centers, sigma=0.75):
    yy, xx = np.mgrid[0:P, 0:P]
    f = np.zeros((P, P))
    for (cy, cx, h) in centers:
        f = np.maximum(f, h * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2)))
    return f


def synth_patches(rng, u, v, centers, noise):
    theta = math.pi * (1.0 - bumps_field(centers))
    base = np.cos(theta)[..., None] * u + np.sin(theta)[..., None] * v
    x = -(base * 2.0 + noise * rng.standard_normal((P, P, D_STAR)))
    return x.astype(np.float32)


def block(cy, cx, pad=0):
    s = H // P
    return (cy * s - pad, (cy + 1) * s + pad, cx * s - pad, (cx + 1) * s + pad)


SAMPLES = [
    # id, expression, n_o, n_c, cue, bump centers (row, col, height), target bump index, with e_neg,
    # global similarity level of each mask embedding (target, other, sprawl, small)
    ("s000", "the dog on the grass", "the dog", "grass", None, [(2, 2, 1.0)], 0, False, [0.55, 0.35, 0.75, 0.2]),
    ("s001", "a red car near a tree", "a red car", "tree", None, [(1, 5, 1.0), (5, 1, 0.75)], 0, False,
     [0.8, 0.4, 0.6, 0.2]),
    ("s002", "a bush behind a woman smiling", "a bush", "woman smiling", "behind", [(1, 1, 1.0), (4, 5, 0.8)], 0,
     True, [0.6, 0.35, 0.7, 0.2]),
    ("s003", "cup left of the plate", "cup", "plate", None, [(1, 1, 1.0), (1, 5, 0.85), (5, 3, 0.7)], 1, False,
     [0.5, 0.6, 0.65, 0.3]),
    ("s004", "man on the right", "man", "", "right", [(3, 5, 1.0)], 0, False, [0.6, 0.3, 0.7, 0.65]),
]


def unit(x):
    x = x - x.mean()
    return x / x.std()


def build(out_dir):
    rng = np.random.default_rng(SEED)
    g = (1.0 + 0.1 * rng.standard_normal(D_STAR)).astype(np.float32)
    b = (0.05 * rng.standard_normal(D_STAR)).astype(np.float32)
    w = (rng.standard_normal((D_STAR, D)) / math.sqrt(D_STAR)).astype(np.float32)
    write_cpt(f"{out_dir}/params/ln_gamma.cpt", g)
    write_cpt(f"{out_dir}/params/ln_beta.cpt", b)
    write_cpt(f"{out_dir}/params/proj.cpt", w)
    params = (g.astype(np.float64), b.astype(np.float64), w.astype(np.float64))

    # Target and background directions in hidden space, centered and decorrelated.
    u = unit(rng.standard_normal(D_STAR))
    v = rng.standard_normal(D_STAR)
    v = unit(v - (v @ u) / (u @ u) * u)
    pu = layer_norm(u, *params[:2]) @ params[2]

    manifest = {
        "version": "copatch-fixture/1",
        "model": "clip-vit-b-32",
        "d": D,
        "d_star": D_STAR,
        "p": P,
        "height": H,
        "width": W,
        "layers": LAYERS,
        "defaults": DEFAULTS,
        "params": {
            "ln_gamma": "params/ln_gamma.cpt",
            "ln_beta": "params/ln_beta.cpt",
            "ln_eps": LN_EPS,
            "proj": "params/proj.cpt",
        },
        "samples": [],
    }
    samples = {}
    for sid, expr, n_o, n_c, cue, centers, target, with_neg, levels in SAMPLES:
        sdir = f"{out_dir}/{sid}"
        patches = {}
        for layer in LAYERS:
            noise = 0.08 if layer == 10 else 0.6
            patches[layer] = synth_patches(rng, u, v, centers, noise)
            write_cpt(f"{sdir}/patches_l{layer}.cpt", patches[layer])

        e_sen = (pu + 0.15 * rng.standard_normal(D)).astype(np.float32)
        e_noun = (pu + 0.15 * rng.standard_normal(D)).astype(np.float32)
        ctx = 0.5 * e_sen.astype(np.float64) + 0.5 * e_noun.astype(np.float64)
        ctx_u = ctx / np.linalg.norm(ctx)

        # Masks: target bump block, first distractor block (or a far patch),
        # a sprawling mask and a small off-target rectangle.
        ty, tx, _ = centers[target]
        y0, y1, x0, x1 = block(ty, tx, pad=3)
        m_target = rect(max(y0, 0), min(y1, H), max(x0, 0), min(x1, W))
        if len(centers) > 1:
            oy, ox, _ = centers[1 - target] if target < 2 else centers[0]
            y0, y1, x0, x1 = block(oy, ox, pad=7)
            m_other = rect(max(y0, 0), min(y1, H), max(x0, 0), min(x1, W))
        else:
            m_other = rect(44, 56, 0, 14)
        m_sprawl = rect(4, 52, 4, 52)
        m_small = rect(24, 30, 24, 30)
        masks = np.stack([m_target, m_other, m_sprawl, m_small]).astype(np.uint8)

        # Image embeddings: the sprawling mask scores highest on global similarity.
        e_img = []
        for lvl in levels:
            r = rng.standard_normal(D)
            r = r - (r @ ctx_u) * ctx_u
            r = r / np.linalg.norm(r)
            e_img.append(lvl * ctx_u + math.sqrt(1 - lvl * lvl) * r)
        e_img = np.array(e_img, dtype=np.float32)

        ty, tx, _ = centers[target]
        y0, y1, x0, x1 = block(ty, tx, pad=4)
        gt = rect(max(y0, 0), min(y1, H), max(x0, 0), min(x1, W))

        entry = {
            "id": sid,
            "expression": expr,
            "n_o": n_o,
            "n_c": n_c,
            "e_sen": f"{sid}/e_sen.cpt",
            "e_noun": f"{sid}/e_noun.cpt",
            "patches": {str(l): f"{sid}/patches_l{l}.cpt" for l in LAYERS},
            "masks": f"{sid}/masks.cpt",
            "e_img": f"{sid}/e_img.cpt",
            "gt": f"{sid}/gt.cpt",
            "cls_layers": f"{sid}/cls_layers.cpt",
        }
        if cue is not None:
            entry["spatial_cue"] = cue
        write_cpt(f"{sdir}/e_sen.cpt", e_sen)
        write_cpt(f"{sdir}/e_noun.cpt", e_noun)
        write_cpt(f"{sdir}/masks.cpt", masks)
        write_cpt(f"{sdir}/e_img.cpt", e_img)
        write_cpt(f"{sdir}/gt.cpt", gt)
        sample = {
            "e_sen": e_sen,
            "e_noun": e_noun,
            "patches": patches[10],
            "masks": masks,
            "e_img": e_img,
            "gt": gt,
            "spatial_cue": cue,
        }
        if with_neg:
            # Negative text resembles the sprawling mask, so the penalty demotes it.
            e_neg = (e_img[2] + 0.1 * rng.standard_normal(D)).astype(np.float32)
            write_cpt(f"{sdir}/e_neg.cpt", e_neg)
            entry["e_neg"] = f"{sid}/e_neg.cpt"
            sample["e_neg"] = e_neg
        cls = (np.linspace(0.2, 1.0, 12)[:, None] * pu[None, :] + rng.standard_normal((12, D))).astype(np.float32)
        write_cpt(f"{sdir}/cls_layers.cpt", cls)
        manifest["samples"].append(entry)
        samples[sid] = sample

    with open(f"{out_dir}/manifest.json", "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    return manifest, samples, params


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures/golden"
    manifest, samples, params = build(out_dir)

    # Round-trip check of the writer through the reader.
    for sid, s in samples.items():
        assert np.array_equal(read_cpt(f"{out_dir}/{sid}/masks.cpt"), s["masks"])

    d = DEFAULTS
    results = [evaluate(samples[e["id"]], params, d["delta"], d["alpha"], d["gamma"]) for e in manifest["samples"]]
    for e, r in zip(manifest["samples"], results):
        r["id"] = e["id"]

    sweep = []
    for i in range(1, 10):
        delta = i / 10
        rs = [evaluate(samples[e["id"]], params, delta, d["alpha"], d["gamma"]) for e in manifest["samples"]]
        sweep.append({"delta": delta, "mean_clusters": summarize(rs)["mean_clusters"]})
    counts = [s["mean_clusters"] for s in sweep]
    assert all(a >= b for a, b in zip(counts, counts[1:])), f"cluster counts not monotone: {counts}"

    expected = {
        "config": d,
        "samples": results,
        "summary": summarize(results),
        "delta_sweep": sweep,
        "render_raw_map_sample": "s000",
    }
    with open(f"{out_dir}/expected.json", "w") as f:
        json.dump(expected, f, indent=2)
        f.write("\n")
    with open(f"{out_dir}/expected_report.toml", "w") as f:
        f.write(render_report(manifest["model"], d, results))
    with open(f"{out_dir}/expected_raw_map_s000.ppm", "wb") as f:
        f.write(render_raw(np.array(results[0]["raw_map"])))

    for r in results:
        print(r["id"], "k", r["clusters"], "sorted", r["sorted_ids"], "topk", r["topk_ids"], "final", r["final_id"],
              "iou %.4f topk %.4f ub %.4f" % (r["iou"], r["topk_oracle_iou"], r["upper_bound_iou"]))
    print("summary", expected["summary"])
    print("delta sweep", counts)


if __name__ == "__main__":
    main()
