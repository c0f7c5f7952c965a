"""Dataset pipeline: manifest in, classification report out.

The pipeline runs in stages, each with a subdirectory of the working
directory addressed by a hash of everything that stage depends on
(upstream keys included), so rerunning with an unchanged configuration
reuses the cached artifacts:

    representations/<key>/   train.fmat test.fmat meta.json pca_*.pca
    kernel/<key>/            gram.fmat rows.fmat [train.signs test.signs]
    model/<key>/             model.svm
    report/<key>.json

Representations and kernels pass through float32 containers whether or not
they come from cache, so a cached rerun reproduces a fresh run's metrics
exactly.  Timings in the report are informational and vary between runs;
everything under ``metrics`` and ``dims`` is deterministic for a fixed
config, manifest, and seed.

Manifest lines are ``path<TAB>split<TAB>labels`` with comma-separated
labels and split either ``train`` or ``test``; tensor paths are resolved
relative to the manifest file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, ValidationError
from .features import correspondence_map, extract_local_features
from .multires import ResolutionConfig, iter_parts
from .network import (
    ConvStage,
    NetworkSpec,
    ReluStage,
    min_input_extent,
    parse_network_file,
    run_network,
)
from .pooling import (
    cross_layer_pool,
    direct_max_pool,
    direct_sum_sqrt_pool,
    spp_pool,
)
from .postproc import (
    pca_fit,
    power_normalize,
    save_pca,
    save_sign_stack,
    sign_quantize,
)
from .svm import (
    GramMatrix,
    gram_matrix,
    gram_matrix_packed,
    kernel_rows,
    load_svm,
    packed_rows,
    save_svm,
    svm_predict,
    svm_train,
)
from .tensor import FeatureMatrix, load_features, load_tensor, save_features

SCHEMES = ("cross-layer", "direct-max", "direct-sum-sqrt", "spp")

RESOLUTION_PRESETS = {
    "whole": dict(blocks_m=0, blocks_n=0, overlap_fraction=0.0, include_whole_image=True),
    "blocks": dict(blocks_m=2, blocks_n=2, overlap_fraction=0.0, include_whole_image=False),
    "both": dict(blocks_m=2, blocks_n=2, overlap_fraction=0.0, include_whole_image=True),
}


def resolve_resolution(value) -> ResolutionConfig:
    """Accept a ResolutionConfig, a preset name, or a plain dict."""
    if isinstance(value, ResolutionConfig):
        return value
    if isinstance(value, str):
        if value not in RESOLUTION_PRESETS:
            raise ConfigError(
                f"unknown resolution preset {value!r}, pick one of "
                f"{sorted(RESOLUTION_PRESETS)}"
            )
        return ResolutionConfig(**RESOLUTION_PRESETS[value])
    if isinstance(value, dict):
        try:
            return ResolutionConfig(**value)
        except (TypeError, ValidationError) as exc:
            raise ConfigError(f"bad resolution config: {exc}") from None
    raise ConfigError(f"bad resolution config: {value!r}")


@dataclass
class PipelineConfig:
    """Everything the pipeline needs besides the dataset itself.

    ``layer_pair`` names two adjacent convolutions by 1-based ordinal; the
    first one's (rectified) output supplies the local features and the
    second one's rectified output supplies the indicator weights.
    ``window`` and ``stride`` default to the second convolution's kernel
    and stride and, for the cross-layer scheme, must match them.
    ``pca_dim`` > 0 projects cross-layer local features before pooling;
    the reference schemes always pool the raw descriptors.
    """

    network: str
    layer_pair: tuple[int, int] = (1, 2)
    window: tuple[int, int] | None = None
    stride: int | None = None
    scheme: str = "cross-layer"
    spp_levels: tuple[int, ...] = (1, 2)
    pca_dim: int = 0
    pca_sample_cap: int = 100000
    resolution: ResolutionConfig = field(
        default_factory=lambda: ResolutionConfig(0, 0, 0.0, True)
    )
    power_norm: bool = True
    quantize: bool = False
    svm_c: float = 1.0
    svm_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}, pick one of {SCHEMES}")
        if len(self.layer_pair) != 2:
            raise ConfigError("layer_pair must name exactly two conv ordinals")
        if self.pca_dim < 0:
            raise ConfigError("pca_dim must be nonnegative")
        if self.pca_sample_cap < 2:
            raise ConfigError("pca_sample_cap must be at least 2")
        if self.svm_c <= 0 or self.svm_tol <= 0:
            raise ConfigError("svm_c and svm_tol must be positive")
        if not self.spp_levels:
            raise ConfigError("spp_levels must not be empty")
        self.layer_pair = (int(self.layer_pair[0]), int(self.layer_pair[1]))
        if not 1 <= self.layer_pair[0] < self.layer_pair[1]:
            raise ConfigError(
                f"layer_pair ordinals must increase from at least 1, "
                f"got {self.layer_pair}"
            )
        self.spp_levels = tuple(int(g) for g in self.spp_levels)
        if self.window is not None:
            self.window = (int(self.window[0]), int(self.window[1]))
        self.resolution = resolve_resolution(self.resolution)


def load_config(path) -> PipelineConfig:
    """Read a JSON config file; unknown keys are rejected."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    if "network" not in raw:
        raise ConfigError(f"{path}: config needs a 'network' path")
    for key in ("layer_pair", "window", "spp_levels"):
        if key in raw and raw[key] is not None:
            raw[key] = tuple(raw[key])
    network = raw.pop("network")
    if not os.path.isabs(network):
        network = os.path.join(os.path.dirname(os.path.abspath(path)), network)
    try:
        return PipelineConfig(network=network, **raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass
class ManifestEntry:
    path: str
    split: str
    labels: frozenset[str]


@dataclass
class DatasetManifest:
    """Parsed dataset manifest with tensor paths already resolved."""

    entries: list[ManifestEntry]

    def __post_init__(self):
        splits = {e.split for e in self.entries}
        if "train" not in splits or "test" not in splits:
            raise ValidationError("manifest needs at least one train and one test entry")
        for entry in self.entries:
            if not entry.labels:
                raise ValidationError(f"{entry.path}: entry carries no labels")

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def classes(self) -> tuple[str, ...]:
        return tuple(sorted(set().union(*(e.labels for e in self.entries))))

    @property
    def single_label(self) -> bool:
        return all(len(e.labels) == 1 for e in self.entries)


def parse_manifest(path) -> DatasetManifest:
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ValidationError(
                    f"{path}:{line_no}: expected path<TAB>split<TAB>labels"
                )
            rel, split, label_field = fields
            if split not in ("train", "test"):
                raise ValidationError(
                    f"{path}:{line_no}: split must be train or test, got {split!r}"
                )
            labels = frozenset(
                part.strip() for part in label_field.split(",") if part.strip()
            )
            if not labels:
                raise ValidationError(f"{path}:{line_no}: no labels given")
            tensor_path = rel if os.path.isabs(rel) else os.path.join(base, rel)
            entries.append(ManifestEntry(path=tensor_path, split=split, labels=labels))
    if not entries:
        raise ValidationError(f"{path}: manifest is empty")
    return DatasetManifest(entries=entries)


@dataclass
class _Geometry:
    """Resolved stage indices and window parameters for one layer pair."""

    t_index: int            # stage whose output supplies local features
    t1_index: int           # stage whose output supplies indicator weights
    t1_spec: object         # ConvLayerSpec of the second convolution
    depth_t: int            # channel depth of the local-feature layer
    window: tuple[int, int]
    stride: int

    @property
    def local_dim(self) -> int:
        return self.window[0] * self.window[1] * self.depth_t


def _resolve_geometry(net: NetworkSpec, config: PipelineConfig) -> _Geometry:
    convs = net.conv_stages()
    first, second = config.layer_pair
    if not 1 <= first < second <= len(convs):
        raise ConfigError(
            f"layer pair {config.layer_pair} does not fit a network with "
            f"{len(convs)} convolutions"
        )
    if second != first + 1:
        raise ConfigError("layer pair must name adjacent convolutions")
    t_conv_index, t_spec = convs[first - 1]
    t1_conv_index, t1_spec = convs[second - 1]
    t_index = t_conv_index
    if t_conv_index + 1 < len(net.stages) and isinstance(
        net.stages[t_conv_index + 1], ReluStage
    ):
        t_index = t_conv_index + 1
    window = config.window or (t1_spec.kernel_h, t1_spec.kernel_w)
    stride = config.stride if config.stride is not None else t1_spec.stride
    if window[0] < 1 or window[1] < 1 or stride < 1:
        raise ConfigError("window and stride must be positive")
    t1_index = t1_conv_index
    if config.scheme == "cross-layer":
        if t1_conv_index != t_index + 1:
            raise ConfigError(
                "cross-layer pooling needs the second convolution to consume the "
                "first one's output directly"
            )
        if window != (t1_spec.kernel_h, t1_spec.kernel_w):
            raise ConfigError(
                f"window {window} must match the second convolution's kernel "
                f"{(t1_spec.kernel_h, t1_spec.kernel_w)}"
            )
        if stride != t1_spec.stride:
            raise ConfigError(
                f"stride {stride} must match the second convolution's stride "
                f"{t1_spec.stride}"
            )
        if t1_conv_index + 1 < len(net.stages) and isinstance(
            net.stages[t1_conv_index + 1], ReluStage
        ):
            t1_index = t1_conv_index + 1
        else:
            raise ConfigError(
                "cross-layer pooling needs a ReLU after the second convolution"
            )
    return _Geometry(
        t_index=t_index,
        t1_index=t1_index,
        t1_spec=t1_spec,
        depth_t=t_spec.out_depth,
        window=window,
        stride=stride,
    )


def network_digest(net: NetworkSpec) -> str:
    h = hashlib.sha256()
    h.update(str(net.seed).encode())
    for stage in net.stages:
        if isinstance(stage, ConvStage):
            s = stage.spec
            h.update(
                f"conv {s.kernel_h} {s.kernel_w} {s.in_depth} {s.out_depth} "
                f"{s.stride} {s.pad}".encode()
            )
            h.update(s.weights.tobytes())
            h.update(s.bias.tobytes())
        elif isinstance(stage, ReluStage):
            h.update(b"relu")
        else:
            h.update(f"maxpool {stage.size} {stage.stride}".encode())
    return h.hexdigest()


def manifest_digest(manifest: DatasetManifest) -> str:
    h = hashlib.sha256()
    for e in manifest.entries:
        h.update(f"{e.path}\t{e.split}\t{','.join(sorted(e.labels))}\n".encode())
    return h.hexdigest()


def _key(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode()
    ).hexdigest()[:16]


def _is_done(directory: str) -> bool:
    return os.path.isfile(os.path.join(directory, ".done"))


def _mark_done(directory: str) -> None:
    with open(os.path.join(directory, ".done"), "w", encoding="utf-8") as fh:
        fh.write("ok\n")


def _round_f32(values: np.ndarray) -> np.ndarray:
    """Round through float32 so in-memory results match their container."""
    return values.astype(np.float32).astype(np.float64)


def _encode_part(outputs, resolution, geometry, config, pca_models):
    """Encode one part's stage outputs into a vector under the config's scheme."""
    layer_t = outputs[geometry.t_index]
    feats = extract_local_features(
        layer_t, geometry.window[0], geometry.window[1], geometry.stride
    )
    if config.scheme == "cross-layer":
        layer_t1 = outputs[geometry.t1_index]
        cmap = correspondence_map(
            feats, geometry.t1_spec, (layer_t1.height, layer_t1.width)
        )
        pooled = cross_layer_pool(layer_t, layer_t1, cmap, pca=pca_models.get(resolution))
        vector = pooled.values
    elif config.scheme == "direct-max":
        vector = direct_max_pool(feats)
    elif config.scheme == "direct-sum-sqrt":
        vector = direct_sum_sqrt_pool(feats)
    else:
        vector = spp_pool(feats, config.spp_levels)
    if config.power_norm:
        vector = power_normalize(vector)
    return np.asarray(vector, dtype=np.float64).ravel()


def _fit_pca_models(train_entries, net, geometry, config, min_hw):
    """One PCA model per participating resolution, fitted on a seeded
    subsample of the training images' local features."""
    if config.scheme != "cross-layer" or config.pca_dim == 0:
        return {}, 0.0
    if config.pca_dim > geometry.local_dim:
        raise ConfigError(
            f"pca_dim {config.pca_dim} exceeds local feature dim {geometry.local_dim}"
        )
    start = time.perf_counter()
    buckets: dict[str, list[np.ndarray]] = {}
    for entry in train_entries:
        image = load_tensor(entry.path)
        for _, resolution, part in iter_parts(image, config.resolution, *min_hw):
            outputs = run_network(part, net)
            layer_t = outputs[geometry.t_index]
            feats = extract_local_features(
                layer_t, geometry.window[0], geometry.window[1], geometry.stride
            )
            buckets.setdefault(resolution, []).append(feats.features.data)
    models = {}
    for resolution in sorted(buckets):
        stacked = np.concatenate(buckets[resolution], axis=0)
        if stacked.shape[0] > config.pca_sample_cap:
            rng = np.random.default_rng(config.seed)
            chosen = rng.choice(stacked.shape[0], config.pca_sample_cap, replace=False)
            stacked = stacked[np.sort(chosen)]
        models[resolution] = pca_fit(FeatureMatrix(stacked), config.pca_dim)
    return models, time.perf_counter() - start


def _represent_images(entries, net, geometry, config, pca_models, min_hw, workers):
    """Float32 representation rows plus summed per-image stage timings."""

    def work(entry):
        image = load_tensor(entry.path)
        forward_s = 0.0
        pool_s = 0.0
        chunks = []
        layout = []
        offset = 0
        for label, resolution, part in iter_parts(image, config.resolution, *min_hw):
            t0 = time.perf_counter()
            outputs = run_network(part, net)
            t1 = time.perf_counter()
            vector = _encode_part(outputs, resolution, geometry, config, pca_models)
            t2 = time.perf_counter()
            forward_s += t1 - t0
            pool_s += t2 - t1
            chunks.append(vector)
            layout.append([label, offset, vector.size])
            offset += vector.size
        return np.concatenate(chunks), layout, forward_s, pool_s

    if workers <= 1:
        results = [work(e) for e in entries]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, entries))
    layout = results[0][1]
    for _, other, _, _ in results[1:]:
        if other != layout:
            raise ContractError("images produce inconsistent representation layouts")
    vectors = np.stack([r[0] for r in results]).astype(np.float32)
    timing = {
        "extraction": sum(r[2] for r in results),
        "pooling": sum(r[3] for r in results),
    }
    return FeatureMatrix(vectors), layout, timing


def _compute_representations(config, manifest, net, geometry, directory, workers):
    min_hw = min_input_extent(net)
    train_entries = manifest.split("train")
    test_entries = manifest.split("test")
    pca_models, pca_seconds = _fit_pca_models(
        train_entries, net, geometry, config, min_hw
    )
    train, layout, timing_train = _represent_images(
        train_entries, net, geometry, config, pca_models, min_hw, workers
    )
    test, test_layout, timing_test = _represent_images(
        test_entries, net, geometry, config, pca_models, min_hw, workers
    )
    if test_layout != layout:
        raise ContractError("train and test images produce different layouts")
    os.makedirs(directory, exist_ok=True)
    save_features(train, os.path.join(directory, "train.fmat"))
    save_features(test, os.path.join(directory, "test.fmat"))
    for resolution, model in pca_models.items():
        save_pca(model, os.path.join(directory, f"pca_{resolution}.pca"))
    images = len(train_entries) + len(test_entries)
    extraction = timing_train["extraction"] + timing_test["extraction"]
    pooling = timing_train["pooling"] + timing_test["pooling"]
    meta = {
        "representation_dim": train.dim,
        "parts": layout,
        "projected_dim": config.pca_dim if pca_models else None,
        "channels": geometry.t1_spec.out_depth
        if config.scheme == "cross-layer"
        else None,
        "local_dim": geometry.local_dim,
        "window": list(geometry.window),
        "stride": geometry.stride,
        "timing": {
            "images": images,
            "per_image": {
                "extraction": extraction / images,
                "pooling": pooling / images,
                "total": (extraction + pooling) / images,
            },
            "pca_fit_seconds": pca_seconds,
        },
    }
    with open(os.path.join(directory, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
    _mark_done(directory)
    return train, test, meta


def run_pipeline(
    config: PipelineConfig,
    manifest: DatasetManifest,
    workdir,
    workers: int = 1,
    use_cache: bool = True,
    stages: str = "all",
) -> dict:
    """Run the configured pipeline over the manifest and return the report.

    ``stages="representations"`` stops after the representation stage
    (benchmarking uses this); otherwise the kernel, training, and
    prediction stages follow.
    """
    if stages not in ("all", "representations"):
        raise ConfigError(f"unknown stages selector {stages!r}")
    workdir = os.path.abspath(workdir)
    net = parse_network_file(config.network)
    geometry = _resolve_geometry(net, config)
    cache = {}

    rep_key = _key(
        {
            "stage": "representations",
            "network": network_digest(net),
            "manifest": manifest_digest(manifest),
            "layer_pair": config.layer_pair,
            "window": geometry.window,
            "stride": geometry.stride,
            "scheme": config.scheme,
            "spp_levels": config.spp_levels,
            "pca_dim": config.pca_dim,
            "pca_sample_cap": config.pca_sample_cap,
            "resolution": dataclasses.asdict(config.resolution),
            "power_norm": config.power_norm,
            "seed": config.seed,
        }
    )
    rep_dir = os.path.join(workdir, "representations", rep_key)
    if use_cache and _is_done(rep_dir):
        train = load_features(os.path.join(rep_dir, "train.fmat"))
        test = load_features(os.path.join(rep_dir, "test.fmat"))
        with open(os.path.join(rep_dir, "meta.json"), "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        cache["representations"] = "hit"
    else:
        train, test, meta = _compute_representations(
            config, manifest, net, geometry, rep_dir, workers
        )
        cache["representations"] = "miss"

    train_entries = manifest.split("train")
    test_entries = manifest.split("test")
    report = {
        "config_hash": rep_key,
        "scheme": config.scheme,
        "quantize": config.quantize,
        "dataset": {
            "train": len(train_entries),
            "test": len(test_entries),
            "classes": manifest.classes(),
            "multi_label": not manifest.single_label,
        },
        "dims": {
            "local_dim": meta["local_dim"],
            "projected_dim": meta["projected_dim"],
            "channels": meta["channels"],
            "representation_dim": meta["representation_dim"],
            "parts": meta["parts"],
            "packed_bytes_per_image": (meta["representation_dim"] + 3) // 4
            if config.quantize
            else None,
        },
        "timing": dict(meta["timing"]),
        "cache": cache,
        "artifacts": {"representations": rep_dir},
    }
    if stages == "representations":
        report["metrics"] = None
        return report

    kernel_key = _key({"stage": "kernel", "parent": rep_key, "quantize": config.quantize})
    kernel_dir = os.path.join(workdir, "kernel", kernel_key)
    gram_path = os.path.join(kernel_dir, "gram.fmat")
    rows_path = os.path.join(kernel_dir, "rows.fmat")
    if use_cache and _is_done(kernel_dir):
        gram = GramMatrix(load_features(gram_path).data.astype(np.float64))
        rows = load_features(rows_path).data.astype(np.float64)
        cache["kernel"] = "hit"
        kernel_seconds = None
    else:
        os.makedirs(kernel_dir, exist_ok=True)
        t0 = time.perf_counter()
        if config.quantize:
            train_signs = [sign_quantize(row) for row in train.data]
            test_signs = [sign_quantize(row) for row in test.data]
            save_sign_stack(train_signs, os.path.join(kernel_dir, "train.signs"))
            save_sign_stack(test_signs, os.path.join(kernel_dir, "test.signs"))
            raw_gram = gram_matrix_packed(train_signs, workers=workers)
            raw_rows = packed_rows(test_signs, train_signs, workers=workers)
        else:
            raw_gram = gram_matrix(train, workers=workers)
            raw_rows = kernel_rows(test, train, workers=workers)
        kernel_seconds = time.perf_counter() - t0
        save_features(FeatureMatrix(raw_gram.values), gram_path)
        save_features(FeatureMatrix(raw_rows), rows_path)
        _mark_done(kernel_dir)
        # Round through float32 so this run matches any later cached rerun.
        gram = GramMatrix(_round_f32(raw_gram.values))
        rows = _round_f32(raw_rows)
        cache["kernel"] = "miss"
    report["artifacts"]["kernel"] = kernel_dir
    report["timing"]["kernel_seconds"] = kernel_seconds

    model_key = _key(
        {
            "stage": "model",
            "parent": kernel_key,
            "svm_c": config.svm_c,
            "svm_tol": config.svm_tol,
        }
    )
    model_dir = os.path.join(workdir, "model", model_key)
    model_path = os.path.join(model_dir, "model.svm")
    if use_cache and _is_done(model_dir):
        model = load_svm(model_path)
        cache["model"] = "hit"
        train_seconds = None
    else:
        os.makedirs(model_dir, exist_ok=True)
        t0 = time.perf_counter()
        model = svm_train(
            gram,
            [e.labels for e in train_entries],
            c=config.svm_c,
            tol=config.svm_tol,
            workers=workers,
        )
        train_seconds = time.perf_counter() - t0
        save_svm(model, model_path)
        _mark_done(model_dir)
        cache["model"] = "miss"
    report["artifacts"]["model"] = model_dir
    report["timing"]["train_seconds"] = train_seconds

    predictions = []
    scores = np.empty((len(test_entries), len(model.classes)))
    for i in range(rows.shape[0]):
        label, row_scores = svm_predict(model, rows[i])
        predictions.append(label)
        scores[i] = row_scores
    report["metrics"] = _metrics(
        model.classes,
        predictions,
        scores,
        [e.labels for e in test_entries],
        manifest.single_label,
    )
    report_path = os.path.join(workdir, "report", f"{model_key}.json")
    os.makedirs(os.path.dirname(report_path), exist_ok=True)
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, default=str)
    report["artifacts"]["report"] = report_path
    return report


def average_precision(scores: np.ndarray, positives: np.ndarray) -> float:
    """Area under the precision-recall curve: one precision term per
    positive, ranked by descending score with ties broken by index."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    total = int(positives.sum())
    if total == 0:
        return float("nan")
    order = np.lexsort((np.arange(scores.size), -scores))
    ranked = positives[order]
    precision = np.cumsum(ranked) / np.arange(1, scores.size + 1)
    return float(precision[ranked].sum() / total)


def _metrics(classes, predictions, scores, test_labels, single_label) -> dict:
    per_class = {}
    for k, name in enumerate(classes):
        positives = np.array([name in labels for labels in test_labels])
        if positives.any():
            per_class[name] = average_precision(scores[:, k], positives)
    mean_ap = float(np.mean(list(per_class.values()))) if per_class else float("nan")
    accuracy = None
    if single_label:
        truth = [next(iter(labels)) for labels in test_labels]
        accuracy = float(np.mean([p == want for p, want in zip(predictions, truth)]))
    return {
        "accuracy": accuracy,
        "average_precision": per_class,
        "mean_average_precision": mean_ap,
    }


def compare_schemes(
    config: PipelineConfig,
    manifest: DatasetManifest,
    workdir,
    schemes: list[str],
    workers: int = 1,
) -> list[dict]:
    """Run the pipeline once per scheme and tabulate the results."""
    if len(schemes) < 2:
        raise ContractError("comparing schemes needs at least two of them")
    if len(set(schemes)) != len(schemes):
        raise ContractError("schemes to compare must be distinct")
    rows = []
    for scheme in schemes:
        variant = dataclasses.replace(config, scheme=scheme)
        report = run_pipeline(variant, manifest, workdir, workers=workers)
        rows.append(
            {
                "scheme": scheme,
                "accuracy": report["metrics"]["accuracy"],
                "mean_average_precision": report["metrics"]["mean_average_precision"],
                "representation_dim": report["dims"]["representation_dim"],
                "per_image_seconds": report["timing"]["per_image"]["total"],
            }
        )
    return rows
