"""Batch pipeline driver.

Each stage of the pipeline is a subcommand: extract, fit-vocab, encode,
train, predict, evaluate, segment, annosim. Stage parameters live in a
JSON config tree; command-line flags override config values. Every
artifact is written atomically together with a `.prov.json` sidecar
recording the effective config hash and seed, so identical configs and
seeds reproduce identical artifacts.

Exit status: 0 on success, 1 on user error (bad config, missing inputs),
2 on internal error. Set TEXBANK_CACHE to a directory to cache extracted
descriptor samples across runs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import annosim as asim
from . import corpus, descriptors, encoders, filterbank, learn, metrics, modelio, segment
from . import vocab as vb
from .errors import TexbankError

DEFAULT_CONFIG = {
    "seed": 0,
    "extract": {
        "descriptor": "mr8",
        "patch_size": 3,
        "lbp_radius": 1.0,
        "lbp_cell": 8,
        "dsift_step": 2,
        "dsift_bin_size": 8,
        "bank_support": 49,
        "bank_scales": [1.0, 2.0, 4.0],
        "grid_step": 1,
        "pyramid": None,  # or {"s_min": -3, "s_max": 1.5, "step": 0.5, "max_area": 1048576}
        "max_descriptors_per_image": 0,  # 0 keeps all
    },
    "vocab": {
        "kind": "gmm",
        "k": 64,
        "iters": 100,
        "pca_dim": 0,  # 0 disables whitening
        "max_training_descriptors": 100000,
    },
    "encode": {
        "encoder": "fv",
        "kcb_lambda": 1.0,
        "llc_r": 5,
        "spp_grid": None,  # or [gx, gy]
    },
    "train": {
        "kernel": "linear",
        "C": 1.0,
        "normalize_kernel": True,
        "recalibrate": True,
    },
    "annosim": {
        "seed_images_per_attribute": 12,
        "strategy": "prior",
        "budgets": [10],
    },
}


class UserError(Exception):
    """Invalid input or configuration; reported with exit status 1."""


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | None, overrides: dict) -> dict:
    config = DEFAULT_CONFIG
    if path:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UserError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise UserError(f"config file is not valid JSON: {exc}")
        if not isinstance(user, dict):
            raise UserError("config root must be a JSON object")
        config = _merge(config, user)
    return _merge(config, overrides)


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_provenance(artifact: Path, config: dict, parents: dict[str, str] | None = None) -> str:
    h = config_hash(config)
    prov = {"config_hash": h, "seed": config.get("seed", 0), "parents": parents or {}}
    atomic_write_bytes(
        artifact.with_suffix(artifact.suffix + ".prov.json"),
        json.dumps(prov, sort_keys=True, indent=1).encode("utf-8"),
    )
    return h


def read_provenance(artifact: Path) -> dict | None:
    prov_path = artifact.with_suffix(artifact.suffix + ".prov.json")
    if not prov_path.exists():
        return None
    return json.loads(prov_path.read_text(encoding="utf-8"))


def _build_extractor(cfg: dict):
    kind = cfg["descriptor"]
    step = int(cfg.get("grid_step", 1))
    if kind == "mr8":
        bank = filterbank.make_mr_bank(
            scales=tuple(cfg["bank_scales"]), support=int(cfg["bank_support"])
        )
        base = filterbank.mr8_extractor(bank)
    elif kind == "lm":
        bank = filterbank.make_lm(
            scales=tuple(cfg["bank_scales"]), support=int(cfg["bank_support"])
        )
        base = filterbank.bank_extractor(bank)
    elif kind == "patch":
        size = int(cfg["patch_size"])
        base = lambda img: descriptors.extract_patches(img, size)
    elif kind == "lbp":
        radius, cell = float(cfg["lbp_radius"]), int(cfg["lbp_cell"])
        base = lambda img: descriptors.extract_lbp(img, radius=radius, cell=cell)
    elif kind == "dsift":
        s, b = int(cfg["dsift_step"]), int(cfg["dsift_bin_size"])
        base = lambda img: descriptors.extract_dsift(img, step=s, bin_size=b)
    else:
        raise UserError(f"unknown descriptor kind {kind!r}")

    def extract(img: corpus.GrayImage) -> descriptors.DescriptorField:
        return descriptors.subsample_field(base(img), step)

    return extract


def _extract_one(args: tuple) -> tuple[str, str]:
    """Worker: extract one image to an npz sample file. Module-level so the
    process pool can pickle it."""
    image_path, out_path, cfg, seed = args
    out_file = Path(out_path)
    cache_dir = os.environ.get("TEXBANK_CACHE")
    cache_key = None
    if cache_dir:
        digest = hashlib.sha256(
            (str(image_path) + config_hash({"extract": cfg, "seed": seed})).encode()
        ).hexdigest()[:24]
        cache_key = Path(cache_dir) / f"sample-{digest}.npz"
        if cache_key.exists():
            atomic_write_bytes(out_file, cache_key.read_bytes())
            return image_path, "cached"
    if cfg["descriptor"] == "field":
        field = descriptors.load_descriptor_field(image_path)
        sample = field.as_sample()
    else:
        img = corpus.load_image(image_path)
        extractor = _build_extractor(cfg)
        pyr_cfg = cfg.get("pyramid")
        if pyr_cfg:
            pyramid = corpus.build_pyramid(
                img,
                s_min=float(pyr_cfg.get("s_min", -3.0)),
                s_max=float(pyr_cfg.get("s_max", 1.5)),
                step=float(pyr_cfg.get("step", 0.5)),
                max_area=int(pyr_cfg.get("max_area", 1024 * 1024)),
            )
            sample = descriptors.multiscale_collect(pyramid, extractor)
        else:
            sample = extractor(img).as_sample()
    cap = int(cfg.get("max_descriptors_per_image", 0))
    if cap and len(sample) > cap:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(sample), size=cap, replace=False))
        sample = sample.subset(keep)
    buf = tempfile.SpooledTemporaryFile()
    np.savez(buf, descriptors=sample.descriptors, positions=sample.positions)
    buf.seek(0)
    data = buf.read()
    atomic_write_bytes(out_file, data)
    if cache_key is not None:
        atomic_write_bytes(cache_key, data)
    return image_path, "ok"


def load_sample(path: Path) -> descriptors.DescriptorSample:
    with np.load(path) as z:
        return descriptors.DescriptorSample(z["descriptors"], z["positions"])


def _sample_stem(image_path: str) -> str:
    return hashlib.sha256(image_path.encode("utf-8")).hexdigest()[:16]


def cmd_extract(args, config) -> int:
    manifest = corpus.load_manifest(args.manifest)
    out_dir = Path(args.out) / "samples"
    cfg = config["extract"]
    jobs = max(1, args.jobs)
    tasks = []
    index = {}
    for entry in manifest.entries:
        image_path = entry.image_path
        if not Path(image_path).is_absolute():
            image_path = str(Path(args.manifest).parent / image_path)
        stem = _sample_stem(entry.image_path)
        out_path = out_dir / f"{stem}.npz"
        index[entry.image_path] = f"samples/{stem}.npz"
        tasks.append((image_path, str(out_path), cfg, config["seed"]))
    if jobs == 1:
        for task in tasks:
            _extract_one(task)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_extract_one, tasks))
    index_path = Path(args.out) / "samples_index.json"
    atomic_write_bytes(index_path, json.dumps(index, sort_keys=True, indent=1).encode())
    write_provenance(index_path, config)
    print(f"extracted {len(tasks)} samples -> {out_dir}")
    return 0


def _load_index(out_dir: Path) -> dict[str, str]:
    index_path = out_dir / "samples_index.json"
    if not index_path.exists():
        raise UserError(f"missing samples index {index_path}; run `extract` first")
    return json.loads(index_path.read_text(encoding="utf-8"))


def cmd_fit_vocab(args, config) -> int:
    cfg = config["vocab"]
    manifest = corpus.load_manifest(args.manifest)
    out_root = Path(args.out)
    index = _load_index(out_root)
    rng = np.random.default_rng(config["seed"])
    pieces = []
    for entry in manifest.split_entries("train"):
        sample = load_sample(out_root / index[entry.image_path])
        pieces.append(sample.descriptors)
    if not pieces:
        raise UserError("manifest has no train entries")
    stack = np.vstack(pieces)
    cap = int(cfg.get("max_training_descriptors", 0))
    if cap and stack.shape[0] > cap:
        keep = np.sort(rng.choice(stack.shape[0], size=cap, replace=False))
        stack = stack[keep]
    models: dict[str, object] = {}
    pca_dim = int(cfg.get("pca_dim", 0))
    if pca_dim:
        whitener = vb.fit_pca_whitener(stack, pca_dim)
        models["whitener"] = whitener
        stack = whitener.transform(stack)
    k = int(cfg["k"])
    iters = int(cfg.get("iters", 100))
    if cfg["kind"] == "kmeans":
        models["vocab"] = vb.kmeans(stack, k, iters=iters, seed=config["seed"])
    elif cfg["kind"] == "gmm":
        models["vocab"] = vb.fit_gmm(stack, k, iters=iters, seed=config["seed"])
    else:
        raise UserError(f"unknown vocabulary kind {cfg['kind']!r}")
    vocab_path = out_root / "vocab.txmd"
    vocab_path.parent.mkdir(parents=True, exist_ok=True)
    modelio.save_models(vocab_path, models)
    write_provenance(vocab_path, config)
    print(f"fitted {cfg['kind']} vocabulary (K={k}) on {stack.shape[0]} descriptors -> {vocab_path}")
    return 0


def _encoder_from_config(cfg: dict, models: dict[str, object]):
    kind = cfg["encoder"]
    voc = models.get("vocab")
    whitener = models.get("whitener")

    def prep(sample: descriptors.DescriptorSample) -> descriptors.DescriptorSample:
        return whitener.transform_sample(sample) if whitener is not None else sample

    if kind == "fv":
        if not isinstance(voc, vb.GmmModel):
            raise UserError("fv encoding requires a gmm vocabulary")
        base = lambda s: encoders.encode_fv(s, voc)
    elif kind in ("bovw", "kcb", "llc", "vlad"):
        if not isinstance(voc, vb.Codebook):
            raise UserError(f"{kind} encoding requires a kmeans codebook")
        if kind == "bovw":
            base = lambda s: encoders.encode_bovw(s, voc)
        elif kind == "kcb":
            lam = float(cfg.get("kcb_lambda", 1.0))
            base = lambda s: encoders.encode_kcb(s, voc, lam)
        elif kind == "llc":
            r = int(cfg.get("llc_r", 5))
            base = lambda s: encoders.encode_llc(s, voc, r)
        else:
            base = lambda s: encoders.encode_vlad(s, voc)
    else:
        raise UserError(f"unknown encoder kind {kind!r}")

    grid = cfg.get("spp_grid")
    if grid:
        gx, gy = int(grid[0]), int(grid[1])
        return lambda s: encoders.spp_encode(prep(s), (gx, gy), base)
    return lambda s: base(prep(s))


def _expected_dim(cfg: dict, models: dict[str, object]) -> int | None:
    voc = models.get("vocab")
    kind = cfg["encoder"]
    if isinstance(voc, vb.GmmModel) and kind == "fv":
        dim = 2 * voc.size * voc.dim
    elif isinstance(voc, vb.Codebook):
        dim = voc.size * voc.dim if kind == "vlad" else voc.size
    else:
        return None
    grid = cfg.get("spp_grid")
    if grid:
        dim *= int(grid[0]) * int(grid[1])
    return dim


def cmd_encode(args, config) -> int:
    cfg = config["encode"]
    out_root = Path(args.out)
    index = _load_index(out_root)
    models = modelio.load_models(args.vocab)
    encoder = _encoder_from_config(cfg, models)
    expected = _expected_dim(cfg, models)
    enc_dir = out_root / "encodings"
    enc_dir.mkdir(parents=True, exist_ok=True)
    enc_index = {}
    for image_path, rel in sorted(index.items()):
        sample = load_sample(out_root / rel)
        vec = encoder(sample)
        if expected is not None and vec.dim != expected:
            raise UserError(
                f"encoder produced dim {vec.dim}, expected {expected} (dimension law violated)"
            )
        stem = _sample_stem(image_path)
        out_path = enc_dir / f"{stem}.txev"
        encoders.save_encoded_vector(vec, out_path)
        enc_index[image_path] = f"encodings/{stem}.txev"
    index_path = out_root / "encodings_index.json"
    atomic_write_bytes(index_path, json.dumps(enc_index, sort_keys=True, indent=1).encode())
    parent = read_provenance(Path(args.vocab))
    write_provenance(index_path, config, {"vocab": parent["config_hash"] if parent else ""})
    print(f"encoded {len(enc_index)} images ({cfg['encoder']}) -> {enc_dir}")
    return 0


def _load_encodings(out_root: Path, manifest, split: str):
    index_path = out_root / "encodings_index.json"
    if not index_path.exists():
        raise UserError(f"missing encodings index {index_path}; run `encode` first")
    index = json.loads(index_path.read_text(encoding="utf-8"))
    vectors, labels, paths = [], [], []
    for entry in manifest.entries:
        if split != "all" and entry.split != split:
            continue
        rel = index.get(entry.image_path)
        if rel is None:
            raise UserError(f"no encoding for manifest entry {entry.image_path!r}")
        vectors.append(encoders.load_encoded_vector(out_root / rel).values)
        labels.append(entry.labels[0])
        paths.append(entry.image_path)
    if not vectors:
        raise UserError(f"no entries in split {split!r}")
    return np.vstack(vectors), np.array(labels), paths


def cmd_train(args, config) -> int:
    cfg = config["train"]
    manifest = corpus.load_manifest(args.manifest)
    out_root = Path(args.out)
    x, labels, _ = _load_encodings(out_root, manifest, "train")
    c = float(cfg.get("C", 1.0))
    models: dict[str, object] = {}
    if cfg["kernel"] == "linear":
        clf = learn.train_linear_svm_ova(x, labels, c=c, seed=config["seed"])
        if cfg.get("recalibrate", True):
            clf = learn.recalibrate(clf, x, labels)
        models["classifier"] = clf
    else:
        if cfg["kernel"] == "exp_chi2":
            sums = np.abs(x).sum(axis=1, keepdims=True)
            sums[sums == 0] = 1.0
            x = x / sums
            lam = learn.estimate_chi2_lambda(x)
            spec = learn.KernelSpec("exp_chi2", lam=lam, normalize=bool(cfg.get("normalize_kernel", True)))
        else:
            spec = learn.KernelSpec(cfg["kernel"], normalize=bool(cfg.get("normalize_kernel", True)))
        gram = learn.compute_kernel(x, x, spec)
        models["classifier"] = learn.train_kernel_svm_ova(
            gram, labels, c=c, seed=config["seed"], training_vectors=x, spec=spec
        )
    model_path = out_root / "model.txmd"
    modelio.save_models(model_path, models)
    write_provenance(model_path, config)
    print(f"trained {cfg['kernel']} one-vs-all SVM on {x.shape[0]} vectors -> {model_path}")
    return 0


def cmd_predict(args, config) -> int:
    manifest = corpus.load_manifest(args.manifest)
    out_root = Path(args.out)
    models = modelio.load_models(args.model)
    clf = models["classifier"]
    x, _, paths = _load_encodings(out_root, manifest, args.split)
    if isinstance(clf, learn.KernelModel) and clf.spec.kind == "exp_chi2":
        sums = np.abs(x).sum(axis=1, keepdims=True)
        sums[sums == 0] = 1.0
        x = x / sums
    scores = clf.decision_values(x)
    classes = clf.classes
    pred_path = out_root / "predictions.csv"
    by_path = {e.image_path: e for e in manifest.entries}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["path", "split", "true_labels"] + [f"score_{c}" for c in classes])
    for i, path in enumerate(paths):
        entry = by_path[path]
        writer.writerow(
            [path, entry.split, ";".join(entry.labels)] + [f"{v:.10g}" for v in scores[i]]
        )
    atomic_write_bytes(pred_path, buf.getvalue().encode("utf-8"))
    parent = read_provenance(Path(args.model))
    write_provenance(pred_path, config, {"model": parent["config_hash"] if parent else ""})
    print(f"wrote scores for {len(paths)} images -> {pred_path}")
    return 0


def cmd_evaluate(args, config) -> int:
    pred_path = Path(args.predictions)
    if not pred_path.exists():
        raise UserError(f"predictions file not found: {pred_path}")
    prov = read_provenance(pred_path)
    if args.lineage:
        if prov is None:
            raise UserError("predictions carry no provenance; use --force to skip the check")
        if prov["config_hash"] != args.lineage and not args.force:
            raise UserError(
                f"lineage mismatch: predictions were produced by {prov['config_hash']}, "
                f"expected {args.lineage} (use --force to override)"
            )
    with open(pred_path, newline="", encoding="utf-8") as f:
        reader = list(csv.reader(f))
    header = reader[0]
    classes = [h[len("score_") :] for h in header[3:]]
    class_index = {c: i for i, c in enumerate(classes)}
    rows = [r for r in reader[1:] if r and (args.split == "all" or r[1] == args.split)]
    if not rows:
        raise UserError(f"no prediction rows in split {args.split!r}")
    scores = np.array([[float(v) for v in r[3:]] for r in rows])
    true_sets = [set(r[2].split(";")) for r in rows]
    primary = np.array([class_index[sorted(s)[0]] for s in true_sets])
    preds = metrics.PredictionSet.from_scores(primary, scores)
    acc = metrics.per_class_accuracy(preds)
    out_rows = [("per_class_accuracy", "*", f"{acc:.6f}")]
    aps = {"pascal08": [], "eleven_point": []}
    for ci, cls in enumerate(classes):
        positives = np.array([cls in s for s in true_sets])
        if not positives.any():
            continue
        for variant in aps:
            ap = metrics.average_precision(scores[:, ci], positives, variant)
            aps[variant].append(ap)
            out_rows.append((f"ap_{variant}", cls, f"{ap:.6f}"))
    for variant, values in aps.items():
        out_rows.append((f"map_{variant}", "*", f"{float(np.mean(values)):.6f}"))
    report_path = Path(args.out) / "metrics.csv"
    body = "metric,class,value\n" + "\n".join(",".join(r) for r in out_rows) + "\n"
    atomic_write_bytes(report_path, body.encode("utf-8"))
    write_provenance(report_path, config, {"predictions": prov["config_hash"] if prov else ""})
    print(f"per_class_accuracy {acc:.4f}")
    for variant, values in aps.items():
        print(f"map_{variant} {float(np.mean(values)):.4f}")
    print(f"wrote {report_path}")
    return 0


def cmd_segment(args, config) -> int:
    out_root = Path(args.out)
    sample = load_sample(Path(args.sample))
    models = modelio.load_models(args.model)
    clf = models["classifier"]
    if not isinstance(clf, learn.LinearClassifier):
        raise UserError("segment requires a linear classifier model")
    vocab_models = modelio.load_models(args.vocab)
    encoder = _encoder_from_config(config["encode"], vocab_models)
    w, h = (int(v) for v in args.size.split("x"))
    proposals_path = Path(args.proposals)
    if proposals_path.is_dir():
        props = [
            segment.RegionProposal(segment.load_mask_pgm(p))
            for p in sorted(proposals_path.glob("*.pgm"))
        ]
    else:
        props = segment.parse_rle_proposals(
            proposals_path.read_text(encoding="utf-8"), (w, h)
        )
    if not props:
        raise UserError("no proposals found")
    scored = segment.score_proposals(props, clf, sample, encoder)
    if not scored:
        raise UserError("every proposal was dropped (no descriptors inside)")
    result = segment.greedy_paste(scored, (w, h))
    map_path = out_root / "labelmap.pgm"
    map_path.parent.mkdir(parents=True, exist_ok=True)
    segment.write_pgm(result.label_map.labels, map_path)
    write_provenance(map_path, config)
    covered = float((result.label_map.labels > 0).mean())
    print(f"pasted {len(scored)} proposals, {covered:.1%} of pixels labeled -> {map_path}")
    return 0


def _read_gt_csv(path: Path) -> asim.GroundTruthMatrix:
    with open(path, newline="", encoding="utf-8") as f:
        reader = list(csv.reader(f))
    if len(reader) < 2 or reader[0][0] != "key":
        raise UserError("ground-truth CSV must start with a `key` column header")
    keys, rows = [], []
    for r in reader[1:]:
        if not r:
            continue
        keys.append(int(r[0]))
        rows.append([int(v) for v in r[1:]])
    return asim.GroundTruthMatrix(np.array(rows), np.array(keys))


def cmd_annosim(args, config) -> int:
    cfg = config["annosim"]
    gt = _read_gt_csv(Path(args.ground_truth))
    per_key = int(cfg.get("seed_images_per_attribute", 12))
    seed_rows = []
    for attr in range(gt.n_attributes):
        rows = np.flatnonzero(gt.key == attr)[:per_key]
        seed_rows.extend(rows.tolist())
    seed_rows = np.array(sorted(seed_rows))
    seed_gt = asim.GroundTruthMatrix(gt.matrix[seed_rows], gt.key[seed_rows])
    model = asim.estimate_cooccurrence(seed_gt)
    held = np.setdiff1d(np.arange(gt.n_images), seed_rows)
    sim_gt = (
        asim.GroundTruthMatrix(gt.matrix[held], gt.key[held]) if held.size else gt
    )
    scores = None
    if args.scores:
        scores_all = np.loadtxt(args.scores, delimiter=",", ndmin=2)
        scores = scores_all[held] if held.size else scores_all
    strategy = cfg.get("strategy", "prior")
    budgets = [int(b) for b in cfg.get("budgets", [10])]
    lines = ["budget,recall,fully_recovered_fraction"]
    for budget in budgets:
        rep = asim.simulate_budget(sim_gt, model, budget, strategy, scores)
        lines.append(f"{rep.budget},{rep.recall:.6f},{rep.fully_recovered_fraction:.6f}")
        print(
            f"budget {rep.budget}: recall {rep.recall:.4f}, "
            f"fully recovered {rep.fully_recovered_fraction:.4f}"
        )
    report_path = Path(args.out) / "annosim_report.csv"
    atomic_write_bytes(report_path, ("\n".join(lines) + "\n").encode("utf-8"))
    write_provenance(report_path, config)
    print(f"wrote {report_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="texbank", description=__doc__)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker pool size")
    parser.add_argument("--out", default="texbank_out", help="artifact directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="images -> descriptor samples")
    p.add_argument("--manifest", required=True)
    p.add_argument("--descriptor", help="mr8|lm|patch|lbp|dsift|field")

    p = sub.add_parser("fit-vocab", help="train split samples -> vocabulary")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", help="kmeans|gmm")
    p.add_argument("--K", type=int, help="vocabulary size")
    p.add_argument("--pca-dim", type=int, dest="pca_dim")

    p = sub.add_parser("encode", help="samples + vocabulary -> pooled vectors")
    p.add_argument("--vocab", required=True, help="vocab.txmd from fit-vocab")
    p.add_argument("--encoder", help="bovw|kcb|llc|vlad|fv")
    p.add_argument("--K", type=int, help="checked against the vocabulary size")

    p = sub.add_parser("train", help="encoded train split -> classifier")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kernel", help="linear|hellinger|additive_chi2|exp_chi2")

    p = sub.add_parser("predict", help="encodings + model -> score table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="all", choices=["train", "val", "test", "all"])

    p = sub.add_parser("evaluate", help="score table -> metrics report")
    p.add_argument("--predictions", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    p.add_argument("--lineage", help="expected config hash of the predictions")
    p.add_argument("--force", action="store_true", help="ignore lineage mismatches")

    p = sub.add_parser("segment", help="sample + proposals + model -> label map")
    p.add_argument("--sample", required=True, help="npz sample from extract")
    p.add_argument("--proposals", required=True, help="RLE file or directory of PGM masks")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--size", required=True, help="image size as WxH")

    p = sub.add_parser("annosim", help="ground truth -> budget/recall report")
    p.add_argument("--ground-truth", required=True, dest="ground_truth")
    p.add_argument("--scores", help="CSV of per-image classifier scores")
    p.add_argument("--strategy", choices=["prior", "posterior"])
    p.add_argument("--budget", type=int)
    return parser


def _overrides_from_args(args) -> dict:
    over: dict = {}
    if args.seed is not None:
        over["seed"] = args.seed
    cmd = args.command
    if cmd == "extract" and args.descriptor:
        over["extract"] = {"descriptor": args.descriptor}
    if cmd == "fit-vocab":
        section = {}
        if args.kind:
            section["kind"] = args.kind
        if args.K:
            section["k"] = args.K
        if args.pca_dim is not None:
            section["pca_dim"] = args.pca_dim
        if section:
            over["vocab"] = section
    if cmd == "encode" and args.encoder:
        over["encode"] = {"encoder": args.encoder}
    if cmd == "train" and args.kernel:
        over["train"] = {"kernel": args.kernel}
    if cmd == "annosim":
        section = {}
        if args.strategy:
            section["strategy"] = args.strategy
        if args.budget is not None:
            section["budgets"] = [args.budget]
        if section:
            over["annosim"] = section
    return over


COMMANDS = {
    "extract": cmd_extract,
    "fit-vocab": cmd_fit_vocab,
    "encode": cmd_encode,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "segment": cmd_segment,
    "annosim": cmd_annosim,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config, _overrides_from_args(args))
        if args.command == "encode" and args.K is not None:
            models = modelio.load_models(args.vocab)
            voc = models.get("vocab")
            size = getattr(voc, "size", None)
            if size is not None and size != args.K:
                raise UserError(f"--K {args.K} does not match the vocabulary size {size}")
        return COMMANDS[args.command](args, config)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TexbankError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
