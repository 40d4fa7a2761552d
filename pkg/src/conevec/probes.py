"""Numeracy probes: small perceptrons trained on frozen embeddings.

Three tasks over integer ranges [0, 10^k]: picking the largest of a
five-number list (accuracy), decoding a number back from its embedding
(RMSE on the raw value), and adding two numbers (RMSE on the raw sum).
Probes stay deliberately small and train in 32-bit; the embeddings under
test are supplied as a callable and never updated.

Every task holds out whole integers: evaluation values never appear in
probe training in any role. A fixed but arbitrary code per value then
scores at chance, while an embedding with real magnitude structure
transfers to the unseen values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch
from torch import nn

from conevec.errors import RangeTooSmall

TASKS = ("list_max", "decode", "add")
LIST_LEN = 5


@dataclass(frozen=True)
class ProbeTask:
    task: str
    k: int = 2
    n_samples: int = 2000
    seeds: tuple[int, ...] = (0, 1, 2)
    steps: int = 2000
    lr: float = 1e-3
    hidden: int | None = None

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown probe task {self.task!r}")
        if self.k < 0:
            raise ValueError("range exponent must be non-negative")

    @property
    def n_integers(self) -> int:
        return 10**self.k + 1


@dataclass(frozen=True)
class ProbeResult:
    task: str
    metric: str
    per_seed: tuple[float, ...]
    mean: float


EmbedFn = Callable[[float], np.ndarray]


def _embed_many(embed: EmbedFn, values: np.ndarray) -> np.ndarray:
    cache: dict[float, np.ndarray] = {}
    rows = []
    for v in values:
        key = float(v)
        if key not in cache:
            cache[key] = np.asarray(embed(key), dtype=np.float64)
        rows.append(cache[key])
    return np.stack(rows).astype(np.float32)


def _mlp(in_dim: int, hidden: int, out_dim: int, depth: int, gen: torch.Generator):
    dims = [in_dim] + [hidden] * (depth - 1) + [out_dim]
    layers: list[nn.Module] = []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        lin = nn.Linear(a, b)
        with torch.no_grad():
            lin.weight.normal_(0.0, (2.0 / a) ** 0.5, generator=gen)
            lin.bias.zero_()
        layers.append(lin)
        if i < depth - 1:
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


def _fit(
    net: nn.Module,
    x: torch.Tensor,
    y: torch.Tensor,
    steps: int,
    lr: float,
    classify: bool,
) -> None:
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss() if classify else nn.MSELoss()
    for _ in range(steps):
        opt.zero_grad()
        out = net(x)
        loss = loss_fn(out, y) if classify else loss_fn(out.squeeze(-1), y)
        loss.backward()
        opt.step()


def _split(n: int) -> int:
    return max(1, int(round(n * 0.8)))


def _integer_split(
    task: ProbeTask, rng: np.random.Generator, min_side: int
) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint train/test integer pools, roughly 80/20."""
    total = task.n_integers
    n_train = _split(total)
    if min(n_train, total - n_train) < min_side:
        raise RangeTooSmall(
            f"{total} integers cannot give both pools {min_side} values"
        )
    perm = rng.permutation(total).astype(np.float64)
    return perm[:n_train], perm[n_train:]


def _run_list_max(task: ProbeTask, embed: EmbedFn, seed: int) -> float:
    rng = np.random.default_rng(seed)
    train_ints, test_ints = _integer_split(task, rng, LIST_LEN)

    def draw(pool: np.ndarray, count: int) -> np.ndarray:
        return np.stack(
            [rng.choice(pool, LIST_LEN, replace=False) for _ in range(count)]
        )

    n_test = max(1, task.n_samples // 4)
    train_lists = draw(train_ints, task.n_samples)
    test_lists = draw(test_ints, n_test)
    lists = np.concatenate([train_lists, test_lists])
    labels = lists.argmax(axis=1)
    feats = _embed_many(embed, lists.ravel())
    d = feats.shape[1]
    feats = feats.reshape(len(lists), LIST_LEN * d)
    cut = task.n_samples
    gen = torch.Generator().manual_seed(seed)
    net = _mlp(LIST_LEN * d, task.hidden or 64, LIST_LEN, depth=2, gen=gen)
    x = torch.from_numpy(feats)
    y = torch.from_numpy(labels)
    _fit(net, x[:cut], y[:cut], task.steps, task.lr, classify=True)
    with torch.no_grad():
        pred = net(x[cut:]).argmax(dim=1)
    return float((pred == y[cut:]).to(torch.float64).mean())


def _distinct_values(task: ProbeTask, rng: np.random.Generator) -> np.ndarray:
    total = task.n_integers
    if total < 10:
        raise RangeTooSmall(f"only {total} distinct integers in range")
    if total <= task.n_samples:
        values = np.arange(total, dtype=np.float64)
    else:
        values = rng.choice(total, task.n_samples, replace=False).astype(np.float64)
    rng.shuffle(values)
    return values


def _run_decode(task: ProbeTask, embed: EmbedFn, seed: int) -> float:
    rng = np.random.default_rng(seed)
    values = _distinct_values(task, rng)
    feats = _embed_many(embed, values)
    cut = _split(len(values))
    gen = torch.Generator().manual_seed(seed)
    net = _mlp(feats.shape[1], task.hidden or 128, 1, depth=5, gen=gen)
    x = torch.from_numpy(feats)
    y = torch.from_numpy(values.astype(np.float32))
    _fit(net, x[:cut], y[:cut], task.steps, task.lr, classify=False)
    with torch.no_grad():
        pred = net(x[cut:]).squeeze(-1)
    return float(torch.sqrt(((pred - y[cut:]) ** 2).to(torch.float64).mean()))


def _run_add(task: ProbeTask, embed: EmbedFn, seed: int) -> float:
    rng = np.random.default_rng(seed)
    train_ints, test_ints = _integer_split(task, rng, 2)
    n_test = max(1, task.n_samples // 4)
    pairs = np.concatenate(
        [
            rng.choice(train_ints, size=(task.n_samples, 2), replace=True),
            rng.choice(test_ints, size=(n_test, 2), replace=True),
        ]
    )
    feats = _embed_many(embed, pairs.ravel())
    d = feats.shape[1]
    feats = feats.reshape(len(pairs), 2 * d)
    targets = pairs.sum(axis=1)
    cut = task.n_samples
    gen = torch.Generator().manual_seed(seed)
    net = _mlp(2 * d, task.hidden or 128, 1, depth=5, gen=gen)
    x = torch.from_numpy(feats)
    y = torch.from_numpy(targets.astype(np.float32))
    _fit(net, x[:cut], y[:cut], task.steps, task.lr, classify=False)
    with torch.no_grad():
        pred = net(x[cut:]).squeeze(-1)
    return float(torch.sqrt(((pred - y[cut:]) ** 2).to(torch.float64).mean()))


_RUNNERS = {"list_max": _run_list_max, "decode": _run_decode, "add": _run_add}


def run_probe(task: ProbeTask, embed: EmbedFn) -> ProbeResult:
    """Train and score one probe per seed; report the per-seed scores and
    their mean (accuracy for list_max, raw-value RMSE otherwise)."""
    runner = _RUNNERS[task.task]
    scores = tuple(runner(task, embed, seed) for seed in task.seeds)
    metric = "accuracy" if task.task == "list_max" else "rmse"
    return ProbeResult(task.task, metric, scores, sum(scores) / len(scores))
