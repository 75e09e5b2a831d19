"""Dataset ingestion: CIFAR-10 binary batches, WebKB content/cites files,
and the synthetic ring-shift task used for desk-scale verification."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestionError
from .graph import Graph, _from_sets, build_ring_graph

log = logging.getLogger(__name__)

CIFAR_RECORD_BYTES = 3073
WEBKB_CLASSES = ("course", "faculty", "project", "staff", "student")


@dataclass
class Dataset:
    """Labeled graph signals.

    Signal mode: one (N, C) matrix per sample, one label per sample.
    Vertex mode: a single (N, C) matrix; labels indexed by vertex, and the
    splits partition the labeled vertices.
    """

    mode: str                      # "signal" | "vertex"
    signals: list[np.ndarray]
    labels: np.ndarray             # (num_samples,) or (N,)
    num_classes: int
    splits: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("signal", "vertex"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "vertex" and len(self.signals) != 1:
            raise ValueError("vertex mode carries exactly one signal matrix")
        labeled = self.labels[self.labels >= 0]
        if labeled.size and (labeled.min() < 0 or labeled.max() >= self.num_classes):
            raise ValueError("labels out of range")


def _parse_cifar_batch(raw: bytes, path) -> tuple[np.ndarray, np.ndarray]:
    if len(raw) % CIFAR_RECORD_BYTES != 0:
        valid = len(raw) - len(raw) % CIFAR_RECORD_BYTES
        raise IngestionError(f"{path}: truncated record at byte offset {valid}")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = arr[:, 0].astype(np.int64)
    bad = np.nonzero(labels > 9)[0]
    if bad.size:
        raise IngestionError(f"{path}: record {bad[0]} has label byte {labels[bad[0]]} > 9")
    # channel-planar R,G,B planes of 1024 bytes each, row-major 32x32
    pixels = arr[:, 1:].reshape(-1, 3, 1024).transpose(0, 2, 1).astype(float) / 255.0
    return pixels, labels


def load_cifar10(path, val_fraction: float = 0.1) -> Dataset:
    """Load the standard binary batches under ``path``.

    Training batches are split train/val by the trailing ``val_fraction``;
    test_batch.bin, when present, becomes the test split.
    """
    path = Path(path)
    train_files = sorted(path.glob("data_batch_*.bin"))
    if not train_files:
        raise IngestionError(f"no data_batch_*.bin files found in {path}")
    signals: list[np.ndarray] = []
    labels: list[int] = []
    for f in train_files:
        px, lb = _parse_cifar_batch(f.read_bytes(), f)
        signals.extend(px)
        labels.extend(lb)
    n_train_total = len(signals)
    test_file = path / "test_batch.bin"
    test_idx = np.empty(0, dtype=np.int64)
    if test_file.exists():
        px, lb = _parse_cifar_batch(test_file.read_bytes(), test_file)
        test_idx = np.arange(n_train_total, n_train_total + len(px))
        signals.extend(px)
        labels.extend(lb)
    n_val = int(round(val_fraction * n_train_total))
    splits = {
        "train": np.arange(0, n_train_total - n_val),
        "val": np.arange(n_train_total - n_val, n_train_total),
        "test": test_idx,
    }
    return Dataset("signal", signals, np.asarray(labels), 10, splits)


def downscale_2x(image: np.ndarray) -> np.ndarray:
    """Mean over non-overlapping 2x2 blocks, per channel: 32x32x3 -> 16x16x3."""
    image = np.asarray(image, dtype=float)
    if image.shape != (32, 32, 3):
        raise ValueError(f"expected a 32x32x3 image, got shape {image.shape}")
    return image.reshape(16, 2, 16, 2, 3).mean(axis=(1, 3))


def downscale_cifar(dataset: Dataset) -> Dataset:
    """Map every 1024-vertex CIFAR signal to the 256-vertex 16x16 grid."""
    signals = [downscale_2x(s.reshape(32, 32, 3)).reshape(256, 3)
               for s in dataset.signals]
    return Dataset(dataset.mode, signals, dataset.labels, dataset.num_classes,
                   dataset.splits)


def load_webkb(content_path, cites_path) -> tuple[Dataset, Graph]:
    """Parse the content/cites text pair into a vertex-mode dataset and graph.

    Hyperlink direction is discarded (edges symmetrized) and self-loops are
    added. Citations mentioning unknown page ids are dropped and counted.
    """
    ids: list[str] = []
    feats: list[np.ndarray] = []
    labels: list[int] = []
    width = None
    class_index = {c: i for i, c in enumerate(WEBKB_CLASSES)}
    for ln, line in enumerate(Path(content_path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        page_id, cls = parts[0], parts[-1]
        row = parts[1:-1]
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise IngestionError(
                f"{content_path}:{ln}: {len(row)} features, expected {width}")
        if cls not in class_index:
            raise IngestionError(f"{content_path}:{ln}: unknown class {cls!r}")
        ids.append(page_id)
        feats.append(np.asarray(row, dtype=float))
        labels.append(class_index[cls])
    if not ids:
        raise IngestionError(f"{content_path}: no content rows")
    index = {pid: i for i, pid in enumerate(ids)}
    n = len(ids)
    sets: list[set[int]] = [{i} for i in range(n)]
    dropped = 0
    for line in Path(cites_path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise IngestionError(f"{cites_path}: malformed citation line {line!r}")
        a, b = parts
        if a not in index or b not in index:
            dropped += 1
            continue
        i, j = index[a], index[b]
        sets[i].add(j)
        sets[j].add(i)
    if dropped:
        log.info("dropped %d citations referencing unknown page ids", dropped)
    graph = _from_sets(n, sets, True)
    x = np.vstack(feats)
    dataset = Dataset("vertex", [x], np.asarray(labels), len(WEBKB_CLASSES))
    dataset.splits = make_splits(dataset, (0.6, 0.2, 0.2), 1, seed=0)[0]
    return dataset, graph


def make_ring_task(n: int, num_classes: int, samples_per_class: int,
                   noise_std: float, seed: int) -> tuple[Dataset, Graph]:
    """Synthetic shift-invariant task: each sample is a random circular shift
    of its class waveform plus Gaussian noise, on a self-looped ring."""
    if n < 4:
        raise ValueError(f"ring task needs n >= 4, got {n}")
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if samples_per_class < 1 or noise_std < 0:
        raise ValueError("degenerate sample count or noise level")
    rng = np.random.default_rng(seed)
    for _ in range(100):
        waves = rng.standard_normal((num_classes, n))
        if not _has_rotation_collision(waves):
            break
    else:
        raise RuntimeError("could not draw rotation-distinct class waveforms")
    signals, labels = [], []
    for c in range(num_classes):
        for _ in range(samples_per_class):
            shift = int(rng.integers(n))
            s = np.roll(waves[c], shift) + noise_std * rng.standard_normal(n)
            signals.append(s[:, None])
            labels.append(c)
    dataset = Dataset("signal", signals, np.asarray(labels), num_classes)
    dataset.splits = make_splits(dataset, (0.8, 0.1, 0.1), 1, seed=seed)[0]
    return dataset, build_ring_graph(n, True)


def _has_rotation_collision(waves: np.ndarray) -> bool:
    c, n = waves.shape
    for a in range(c):
        for b in range(a + 1, c):
            for shift in range(n):
                if np.allclose(waves[a], np.roll(waves[b], shift)):
                    return True
    return False


def nearest_rotation_class(sample: np.ndarray, waves: np.ndarray) -> int:
    """Brute-force oracle: class whose rotated waveform is closest in L2."""
    sample = np.asarray(sample, dtype=float).ravel()
    best, best_c = np.inf, -1
    for c in range(waves.shape[0]):
        for shift in range(waves.shape[1]):
            d = float(np.sum((sample - np.roll(waves[c], shift)) ** 2))
            if d < best:
                best, best_c = d, c
    return best_c


def make_splits(dataset: Dataset, ratios: tuple[float, float, float],
                num_splits: int, seed: int) -> list[dict[str, np.ndarray]]:
    """Stratified-by-class random train/val/test assignments."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    labels = dataset.labels
    items = np.nonzero(labels >= 0)[0]
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(num_splits):
        parts: dict[str, list[np.ndarray]] = {"train": [], "val": [], "test": []}
        for c in range(dataset.num_classes):
            members = items[labels[items] == c]
            n_c = len(members)
            bounds = np.floor(np.cumsum(ratios) * n_c + 0.5).astype(int)
            if bounds[0] < 1 or bounds[1] - bounds[0] < 1 or n_c - bounds[1] < 1:
                raise ValueError(
                    f"class {c} has too few samples ({n_c}) for ratios {ratios}")
            perm = rng.permutation(members)
            parts["train"].append(perm[:bounds[0]])
            parts["val"].append(perm[bounds[0]:bounds[1]])
            parts["test"].append(perm[bounds[1]:])
        out.append({k: np.sort(np.concatenate(v)) for k, v in parts.items()})
    return out


def export_dataset_csv(dataset: Dataset, signals_path, labels_path):
    """Write (sample_id, vertex, channel, value) rows plus a labels CSV."""
    with open(signals_path, "w") as f:
        f.write("sample_id,vertex,channel,value\n")
        for s, sig in enumerate(dataset.signals):
            for v in range(sig.shape[0]):
                for c in range(sig.shape[1]):
                    f.write(f"{s},{v},{c},{sig[v, c]:.10g}\n")
    with open(labels_path, "w") as f:
        f.write("sample_id,label\n")
        for s, y in enumerate(dataset.labels):
            f.write(f"{s},{int(y)}\n")
