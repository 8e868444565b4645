"""Cognitive engine: per-request technology selection with entropy-gated self-training.

A distance-weighted k-NN vote over the labeled traffic-pattern store gives a
probability for every technology.  The Shannon entropy of that vector is the
selection's uncertainty; a selection is admitted to the store as a
pseudo-label only when it is no more uncertain than the classifier is on the
nearby labeled data.  Observed delay violations later relabel or drop
admitted examples.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import BookkeepingError, NoFeasibleTechnology
from .radio import TechnologyRegistry, transmission_delay, transmission_energy
from .traffic import FEATURE_FIELDS, TrafficPattern, featurize, sample_pattern

ORIGINS = ("seed", "pseudo", "corrected")


@dataclass
class LabeledExample:
    features: np.ndarray
    label: str
    origin: str = "seed"
    recorded_entropy: float = 0.0
    # in-memory only: lets corrections and audits re-evaluate the example
    pattern: TrafficPattern | None = None

    def to_json(self) -> dict:
        return {
            "features": [float(v) for v in self.features],
            "label": self.label,
            "origin": self.origin,
            "recorded_entropy": float(self.recorded_entropy),
        }


class Dataset:
    """Labeled traffic patterns plus the indices admitted through the entropy gate."""

    def __init__(self, technologies: Sequence[str], examples: Iterable[LabeledExample] = ()):
        self.technologies = tuple(technologies)
        self._label_index = {t: i for i, t in enumerate(self.technologies)}
        self.examples: list[LabeledExample] = []
        self.pseudo_batch: list[int] = []
        # growable mirrors of features/labels for the vectorized k-NN
        self._x = np.empty((16, len(FEATURE_FIELDS)))
        self._y = np.empty(16, dtype=np.intp)
        for ex in examples:
            self.add(ex)

    def __len__(self) -> int:
        return len(self.examples)

    def add(self, example: LabeledExample, pseudo: bool = False) -> int:
        if example.label not in self._label_index:
            raise ValueError(f"label {example.label!r} is not a registry technology")
        if example.origin not in ORIGINS:
            raise ValueError(f"unknown origin {example.origin!r}")
        if example.recorded_entropy < 0:
            raise ValueError("recorded_entropy must be >= 0")
        idx = len(self.examples)
        if idx == len(self._y):
            self._x = np.concatenate([self._x, np.empty_like(self._x)])
            self._y = np.concatenate([self._y, np.empty_like(self._y)])
        self._x[idx] = example.features
        self._y[idx] = self._label_index[example.label]
        self.examples.append(example)
        if pseudo:
            self.pseudo_batch.append(idx)
        return idx

    def index_of(self, example: LabeledExample) -> int:
        for i, ex in enumerate(self.examples):
            if ex is example:
                return i
        raise BookkeepingError("example is not in the dataset")

    def remove(self, example: LabeledExample) -> None:
        idx = self.index_of(example)
        n = len(self.examples)
        self._x[idx:n - 1] = self._x[idx + 1:n]
        self._y[idx:n - 1] = self._y[idx + 1:n]
        del self.examples[idx]
        self.pseudo_batch = [i - (i > idx) for i in self.pseudo_batch if i != idx]

    def relabel(self, example: LabeledExample, label: str) -> None:
        if label not in self._label_index:
            raise ValueError(f"label {label!r} is not a registry technology")
        self._y[self.index_of(example)] = self._label_index[label]
        example.label = label
        example.origin = "corrected"

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Views of the feature matrix (n x 5) and integer label column."""
        n = len(self.examples)
        return self._x[:n], self._y[:n]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(ex.to_json()) + "\n" for ex in self.examples)

    @classmethod
    def from_jsonl(cls, technologies: Sequence[str], text: str) -> "Dataset":
        ds = cls(technologies)
        for line in io.StringIO(text):
            if not line.strip():
                continue
            row = json.loads(line)
            ex = LabeledExample(
                features=np.asarray(row["features"], dtype=float),
                label=row["label"],
                origin=row["origin"],
                recorded_entropy=float(row["recorded_entropy"]),
            )
            ds.add(ex, pseudo=row["origin"] == "pseudo")
        return ds

    def copy(self) -> "Dataset":
        ds = Dataset(self.technologies)
        for i, ex in enumerate(self.examples):
            ds.add(LabeledExample(ex.features.copy(), ex.label, ex.origin, ex.recorded_entropy, ex.pattern),
                   pseudo=i in self.pseudo_batch)
        return ds


def entropy(p) -> float:
    """Shannon entropy in nats with 0 * ln 0 taken as 0."""
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    h = -float(np.sum(nz * np.log(nz)))
    if h <= 0.0:
        return 0.0
    # rounding can leave a hair above ln c
    return min(h, math.log(len(p)))


def _uniform(mask: np.ndarray) -> np.ndarray:
    p = np.zeros(len(mask))
    p[mask] = 1.0 / np.count_nonzero(mask)
    return p


def predict_proba(
    dataset: Dataset,
    features,
    mask,
    k: int = 5,
    epsilon: float = 1e-6,
    exclude: int | None = None,
) -> np.ndarray:
    """Distance-weighted k-NN vote, masked to feasible technologies and renormalized.

    ``exclude`` drops one stored example from the vote (leave-one-out).
    Falls back to uniform over the feasible set when no neighbor vote survives.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise NoFeasibleTechnology("no technology is feasible for this request")
    if k < 1:
        raise ValueError("k must be >= 1")
    x, y = dataset.arrays()
    if len(y) - (exclude is not None) <= 0:
        return _uniform(mask)
    d = _distances(x, np.asarray(features, dtype=float)[None, :])[0]
    return _vote(d, y, mask, k, epsilon, exclude)


def _distances(x: np.ndarray, queries: np.ndarray) -> np.ndarray:
    diff = queries[:, None, :] - x[None, :, :]
    return np.sqrt(np.einsum("qnf,qnf->qn", diff, diff))


def _vote(d: np.ndarray, y: np.ndarray, mask: np.ndarray, k: int, epsilon: float, exclude: int | None) -> np.ndarray:
    n = len(y)
    if exclude is not None:
        d = d.copy()
        d[exclude] = np.inf
        n -= 1
    nearest = _k_smallest(d, min(k, n))
    votes = np.bincount(y[nearest], weights=1.0 / (d[nearest] + epsilon), minlength=len(mask))
    votes[~mask] = 0.0
    total = votes.sum()
    if not total > 0:
        return _uniform(mask)
    return votes / total


def _k_smallest(d: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest entries, ordered by (value, index)."""
    if k >= len(d):
        return np.argsort(d, kind="stable")
    cut = np.partition(d, k - 1)[k - 1]
    cand = np.flatnonzero(d <= cut)
    return cand[np.argsort(d[cand], kind="stable")][:k]


def nearest_indices(dataset: Dataset, features, k: int) -> np.ndarray:
    x, _ = dataset.arrays()
    d = _distances(x, np.asarray(features, dtype=float)[None, :])[0]
    return _k_smallest(d, min(k, len(d)))


def reference_entropy(dataset: Dataset, features, mask, k: int = 5, epsilon: float = 1e-6) -> float:
    """Mean leave-one-out prediction entropy of the k stored examples nearest ``features``."""
    mask = np.asarray(mask, dtype=bool)
    x, y = dataset.arrays()
    if len(y) == 1:
        return entropy(_uniform(mask))
    nn = nearest_indices(dataset, features, k)
    rows = _distances(x, x[nn])
    return float(np.mean([entropy(_vote(rows[r], y, mask, k, epsilon, int(j))) for r, j in enumerate(nn)]))


@dataclass
class SelectionDecision:
    decision_id: int
    features: np.ndarray
    probs: np.ndarray
    entropy: float
    chosen: str
    admitted_for_training: bool = False
    mask: np.ndarray | None = None
    pattern: TrafficPattern | None = None
    reference_entropy: float | None = None


def select(
    dataset: Dataset,
    features,
    mask,
    energy_estimates,
    k: int = 5,
    epsilon: float = 1e-6,
    decision_id: int = 0,
    pattern: TrafficPattern | None = None,
) -> SelectionDecision:
    """Argmax technology; exact probability ties go to lower energy, then registry order."""
    mask = np.asarray(mask, dtype=bool)
    probs = predict_proba(dataset, features, mask, k, epsilon)
    energy = list(energy_estimates)
    best = min(np.flatnonzero(mask), key=lambda i: (-probs[i], energy[i], i))
    return SelectionDecision(
        decision_id=decision_id,
        features=np.asarray(features, dtype=float),
        probs=probs,
        entropy=entropy(probs),
        chosen=dataset.technologies[best],
        mask=mask,
        pattern=pattern,
    )


def admit_pseudo_label(decision: SelectionDecision, dataset: Dataset, k: int = 5, epsilon: float = 1e-6) -> bool:
    """Entropy gate: admit iff the decision is no more uncertain than nearby labeled data."""
    if len(dataset) == 0:
        decision.reference_entropy = None
        return False
    mask = decision.mask if decision.mask is not None else np.ones(len(dataset.technologies), dtype=bool)
    e_ref = reference_entropy(dataset, decision.features, mask, k, epsilon)
    decision.reference_entropy = e_ref
    if decision.entropy <= e_ref:
        dataset.add(
            LabeledExample(decision.features, decision.chosen, "pseudo", decision.entropy, decision.pattern),
            pseudo=True,
        )
        decision.admitted_for_training = True
    return decision.admitted_for_training


@dataclass(frozen=True)
class OracleConfig:
    """Where bootstrap patterns come from and how the rule oracle scores technologies."""

    ranges: Mapping[str, tuple[float, float]]
    distance_m: tuple[float, float]
    feature_bounds: Mapping[str, tuple[float, float]]
    w_delay: float = 1.0
    w_energy: float = 1.0


def rule_oracle_label(
    registry: TechnologyRegistry,
    pattern: TrafficPattern,
    mask: Sequence[bool],
    w_delay: float = 1.0,
    w_energy: float = 1.0,
) -> str | None:
    """Feasible technology minimizing w_delay*delay + w_energy*energy.

    Candidates whose link delay already exceeds the pattern's latency budget
    are dropped first, unless that would leave nothing.
    """
    feasible = [p for p, ok in zip(registry, mask) if ok]
    if not feasible:
        return None
    bytes_ = pattern.data_volume_bytes
    in_budget = [p for p in feasible if transmission_delay(p, bytes_) <= pattern.latency_budget_s]
    candidates = in_budget or feasible
    best = min(
        candidates,
        key=lambda p: w_delay * transmission_delay(p, bytes_) + w_energy * transmission_energy(p, bytes_),
    )
    return best.id


def coverage_mask(registry: TechnologyRegistry, pattern: TrafficPattern, distance_m: float) -> list[bool]:
    """Feasibility for a fresh device (no messages sent today)."""
    return [
        distance_m < p.coverage_m
        and (p.max_payload_bytes is None or pattern.data_volume_bytes <= p.max_payload_bytes)
        for p in registry
    ]


def bootstrap_dataset(registry: TechnologyRegistry, oracle: OracleConfig, count: int, seed: int) -> Dataset:
    if count < 1:
        raise ValueError("bootstrap count must be >= 1")
    rng = np.random.default_rng([seed, 3])
    ds = Dataset(registry.ids)
    lo, hi = oracle.distance_m
    for _ in range(count):
        pattern = sample_pattern(rng, oracle.ranges)
        distance = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
        label = rule_oracle_label(
            registry, pattern, coverage_mask(registry, pattern, distance), oracle.w_delay, oracle.w_energy
        )
        if label is None:
            continue
        ds.add(LabeledExample(featurize(pattern, oracle.feature_bounds), label, "seed", 0.0, pattern))
    return ds


@dataclass
class EngineConfig:
    k: int = 5
    epsilon: float = 1e-6
    admission: bool = True
    feedback: bool = True
    bootstrap_count: int = 200
    w_delay: float = 1.0
    w_energy: float = 1.0


@dataclass
class _Retained:
    decision: SelectionDecision
    example: LabeledExample


class CognitiveEngine:
    """Stateful wrapper: numbers decisions and remembers admitted ones for feedback."""

    def __init__(self, registry: TechnologyRegistry, config: EngineConfig, dataset: Dataset | None = None):
        self.registry = registry
        self.config = config
        self.dataset = dataset if dataset is not None else Dataset(registry.ids)
        self._next_id = 0
        self._retained: dict[int, _Retained] = {}
        self.corrections = {"none": 0, "relabeled": 0, "removed": 0}

    def select(self, features, mask, energy_estimates, pattern: TrafficPattern | None = None) -> SelectionDecision:
        decision = select(
            self.dataset, features, mask, energy_estimates,
            self.config.k, self.config.epsilon, self._next_id, pattern,
        )
        self._next_id += 1
        return decision

    def admit(self, decision: SelectionDecision) -> bool:
        admitted = admit_pseudo_label(decision, self.dataset, self.config.k, self.config.epsilon)
        if admitted:
            self._retained[decision.decision_id] = _Retained(decision, self.dataset.examples[-1])
        return admitted

    def is_retained(self, decision_id: int) -> bool:
        return decision_id in self._retained

    def fastest_feasible(self, pattern: TrafficPattern, mask) -> str:
        candidates = [p for p, ok in zip(self.registry, mask) if ok]
        return min(candidates, key=lambda p: transmission_delay(p, pattern.data_volume_bytes)).id

    def feedback_correct(
        self, decision_id: int, observed_delay_s: float, observed_energy_j: float, pattern: TrafficPattern
    ) -> str:
        """Relabel or drop an admitted example whose technology missed the latency budget.

        The replacement label is the feasible technology with the lowest model
        delay for the example's own pattern; if the example already carries
        it, nothing better exists and the example is removed.
        """
        try:
            kept = self._retained[decision_id]
        except KeyError:
            raise BookkeepingError(f"decision {decision_id} is not retained") from None
        if observed_delay_s <= pattern.latency_budget_s:
            action = "none"
        else:
            own = kept.example.pattern or pattern
            target = self.fastest_feasible(own, kept.decision.mask)
            if target != kept.example.label:
                self.dataset.relabel(kept.example, target)
                action = "relabeled"
            else:
                self.dataset.remove(kept.example)
                del self._retained[decision_id]
                action = "removed"
        self.corrections[action] += 1
        return action


@dataclass
class CorpusItem:
    pattern: TrafficPattern
    features: np.ndarray
    mask: np.ndarray
    label: str


def make_corpus(
    registry: TechnologyRegistry,
    classes: Sequence[Mapping[str, tuple[float, float]]],
    distance_m: tuple[float, float],
    feature_bounds: Mapping[str, tuple[float, float]],
    size: int,
    seed: int,
    w_delay: float = 1.0,
    w_energy: float = 1.0,
) -> list[CorpusItem]:
    """Patterns drawn from a mixture of range classes, labeled by the rule oracle."""
    rng = np.random.default_rng([seed, 4])
    out = []
    while len(out) < size:
        pattern = sample_pattern(rng, classes[int(rng.integers(len(classes)))])
        lo, hi = distance_m
        mask = np.array(coverage_mask(registry, pattern, float(rng.uniform(lo, hi))))
        label = rule_oracle_label(registry, pattern, mask, w_delay, w_energy)
        if label is not None:
            out.append(CorpusItem(pattern, featurize(pattern, feature_bounds), mask, label))
    return out


def agreement(engine: CognitiveEngine, items: Sequence[CorpusItem]) -> float:
    hits = 0
    for it in items:
        est = [transmission_energy(p, it.pattern.data_volume_bytes) for p in engine.registry]
        hits += select(engine.dataset, it.features, it.mask, est, engine.config.k, engine.config.epsilon).chosen == it.label
    return hits / len(items)


def self_training_trial(
    registry: TechnologyRegistry,
    config: EngineConfig,
    train: Sequence[CorpusItem],
    test: Sequence[CorpusItem],
    seed_fraction: float = 0.1,
) -> tuple[float, float]:
    """Seed with the first ``seed_fraction`` of ``train``, self-train on the rest.

    Feedback reports the model delay of the chosen technology.  Returns the
    oracle agreement on ``test`` before and after self-training.
    """
    n_seed = max(1, int(round(seed_fraction * len(train))))
    dataset = Dataset(registry.ids)
    for it in train[:n_seed]:
        dataset.add(LabeledExample(it.features, it.label, "seed", 0.0, it.pattern))
    engine = CognitiveEngine(registry, config, dataset)
    before = agreement(engine, test)
    for it in train[n_seed:]:
        est = [transmission_energy(p, it.pattern.data_volume_bytes) for p in registry]
        decision = engine.select(it.features, it.mask, est, it.pattern)
        if config.admission and engine.admit(decision) and config.feedback:
            delay = transmission_delay(registry.profile(decision.chosen), it.pattern.data_volume_bytes)
            engine.feedback_correct(decision.decision_id, delay, 0.0, it.pattern)
    return before, agreement(engine, test)
