"""Opponent modeling: Bayesian and scalable Bayesian posteriors over
hypothesis utility functions, frequency analysis, and a Gaussian-process
predictor for the opponent's future concession.

Every model instance belongs to a single strategy instance in a single
session; nothing here is shared across sessions.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .domain import LinearUtility, NegotiationDomain, Offer, OfferSpace

log = logging.getLogger(__name__)

LIKELIHOOD_FLOOR = 1e-300
MAX_FULL_HYPOTHESES = 100_000
DEFAULT_WEIGHT_GRID = tuple(round(0.1 * k, 1) for k in range(11))
DEFAULT_CONCESSION_SPEED = 1.0
DEFAULT_SIGMA = 0.15


class HypothesisSetTooLargeError(ValueError):
    """Full Bayesian learning loops over every hypothesis; use the scalable
    variant for domains where the grid explodes."""


def gaussian_density(value, mean: float, sigma: float):
    """N(value | mean, sigma); shared by both Bayesian variants so their
    likelihood factors are bit-identical."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    diff = (np.asarray(value, dtype=float) - mean) / sigma
    return np.exp(-0.5 * diff * diff) / (sigma * math.sqrt(2.0 * math.pi))


def triangular_eval(issue_size: int, peak: int, option: int) -> float:
    """Piecewise-linear evaluation rising to 1 at ``peak`` (1-based options)."""
    if not (1 <= peak <= issue_size and 1 <= option <= issue_size):
        raise ValueError("peak and option must lie in [1, issue_size]")
    if option == peak:
        return 1.0
    if option < peak:
        return (option - 1) / (peak - 1)
    return (issue_size - (option - 1)) / (issue_size - (peak - 1))


def triangular_table(issue_size: int) -> np.ndarray:
    """T[n-1, l-1] = triangular_eval(issue_size, n, l)."""
    table = np.empty((issue_size, issue_size))
    for n in range(1, issue_size + 1):
        for l in range(1, issue_size + 1):
            table[n - 1, l - 1] = triangular_eval(issue_size, n, l)
    return table


@dataclass(frozen=True)
class TriangularEvaluator:
    issue_size: int
    peak: int

    def __post_init__(self) -> None:
        if not 1 <= self.peak <= self.issue_size:
            raise ValueError("peak must lie in [1, issue_size]")

    def value(self, option_index: int) -> float:
        """Evaluation of a 0-based option index."""
        return triangular_eval(self.issue_size, self.peak, option_index + 1)


# ---------------------------------------------------------------------------
# Full Bayesian learning
# ---------------------------------------------------------------------------

class HypothesisSet:
    """Grid of candidate opponent utilities: every combination of per-issue
    weights from ``weight_grid`` with triangular evaluator peaks."""

    def __init__(self, space: OfferSpace, weights: np.ndarray, peaks: np.ndarray,
                 priors: np.ndarray):
        self.space = space
        self.weights = weights  # (num_hyps, num_issues)
        self.peaks = peaks      # (num_hyps, num_issues), 1-based
        self.priors = priors
        self.tri_tables = [triangular_table(issue.size) for issue in space.issues]

    @classmethod
    def build(cls, space: OfferSpace,
              weight_grid: Sequence[float] = DEFAULT_WEIGHT_GRID) -> "HypothesisSet":
        sizes = [issue.size for issue in space.issues]
        p = len(sizes)
        count = len(weight_grid) ** p * math.prod(sizes)
        if count > MAX_FULL_HYPOTHESES:
            raise HypothesisSetTooLargeError(
                f"{count} hypotheses exceed the {MAX_FULL_HYPOTHESES} cap for full "
                "Bayesian learning; use the scalable variant instead"
            )
        grid = np.asarray(list(weight_grid), dtype=float)
        weight_combos = np.stack(
            np.meshgrid(*([grid] * p), indexing="ij"), axis=-1
        ).reshape(-1, p)
        peak_combos = np.stack(
            np.meshgrid(*[np.arange(1, k + 1) for k in sizes], indexing="ij"), axis=-1
        ).reshape(-1, p)
        weights = np.repeat(weight_combos, len(peak_combos), axis=0)
        peaks = np.tile(peak_combos, (len(weight_combos), 1))
        priors = np.full(len(weights), 1.0 / len(weights))
        return cls(space, weights, peaks, priors)

    def __len__(self) -> int:
        return len(self.weights)

    def hypothesis(self, index: int) -> LinearUtility:
        evaluations = [
            [self.tri_tables[j][self.peaks[index, j] - 1, l] for l in range(issue.size)]
            for j, issue in enumerate(self.space.issues)
        ]
        return LinearUtility(self.weights[index], evaluations, normalized=False)

    def value_column(self, offer: Offer) -> np.ndarray:
        """u(offer) for every hypothesis."""
        total = np.zeros(len(self.weights))
        for j, x in enumerate(offer):
            total += self.weights[:, j] * self.tri_tables[j][self.peaks[:, j] - 1, x]
        return total

    def expected_values(self, probs: np.ndarray) -> np.ndarray:
        """Posterior-mean utility of every offer in canonical order.

        Linearity lets the mean factorize per issue, avoiding the full
        |hypotheses| x |offers| matrix.
        """
        columns = self.space.option_columns()
        out = np.zeros(self.space.size)
        for j, issue in enumerate(self.space.issues):
            contrib = self.tri_tables[j][self.peaks[:, j] - 1, :] * (
                probs * self.weights[:, j]
            )[:, None]
            out += contrib.sum(axis=0)[columns[:, j]]
        return out


@dataclass(frozen=True)
class BayesPosterior:
    probs: np.ndarray
    concession_speed: float = DEFAULT_CONCESSION_SPEED
    sigma: float = DEFAULT_SIGMA
    resets: int = 0

    @classmethod
    def uniform(cls, num_hypotheses: int, concession_speed: float = DEFAULT_CONCESSION_SPEED,
                sigma: float = DEFAULT_SIGMA) -> "BayesPosterior":
        return cls(np.full(num_hypotheses, 1.0 / num_hypotheses), concession_speed, sigma)


def bayes_update(
    posterior: BayesPosterior | None,
    hypothesis_set: HypothesisSet,
    received: tuple[Offer, float],
    deadline: float,
) -> BayesPosterior:
    """Multiply each hypothesis's probability by the Gaussian likelihood of
    the received proposal under a linearly conceding opponent, then
    renormalize in place of the single probability list.

    A fully underflowed vector is reset to uniform and counted in ``resets``.
    """
    offer, t = received
    if t > deadline:
        raise ValueError("observation after the deadline")
    if posterior is None:
        posterior = BayesPosterior.uniform(len(hypothesis_set))
    mean = 1.0 - posterior.concession_speed * (t / deadline)
    likelihood = gaussian_density(
        hypothesis_set.value_column(offer), mean, posterior.sigma
    )
    likelihood = np.maximum(likelihood, LIKELIHOOD_FLOOR)
    updated = posterior.probs * likelihood
    total = updated.sum()
    if total <= 0.0:
        log.debug("bayes posterior underflowed; reset to uniform")
        return replace(
            posterior,
            probs=np.full_like(posterior.probs, 1.0 / len(posterior.probs)),
            resets=posterior.resets + 1,
        )
    return replace(posterior, probs=updated / total)


def bayes_expected_utility(
    posterior: BayesPosterior, hypothesis_set: HypothesisSet, offer: Offer
) -> float:
    return float(np.dot(posterior.probs, hypothesis_set.value_column(offer)))


# ---------------------------------------------------------------------------
# Scalable Bayesian learning
# ---------------------------------------------------------------------------

@dataclass
class ScalablePosterior:
    """Independent per-issue posteriors over weights and triangular
    evaluator peaks."""

    space: OfferSpace
    weight_hyps: list[np.ndarray]
    weight_probs: list[np.ndarray]
    eval_probs: list[np.ndarray]  # over peaks 1..K_j per issue
    concession_speed: float = DEFAULT_CONCESSION_SPEED
    sigma: float = DEFAULT_SIGMA
    resets: int = 0
    tri_tables: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.tri_tables:
            self.tri_tables = [triangular_table(i.size) for i in self.space.issues]

    @classmethod
    def uniform(cls, space: OfferSpace,
                weight_grid: Sequence[float] = DEFAULT_WEIGHT_GRID,
                concession_speed: float = DEFAULT_CONCESSION_SPEED,
                sigma: float = DEFAULT_SIGMA) -> "ScalablePosterior":
        grid = np.asarray(list(weight_grid), dtype=float)
        return cls(
            space=space,
            weight_hyps=[grid.copy() for _ in space.issues],
            weight_probs=[np.full(len(grid), 1.0 / len(grid)) for _ in space.issues],
            eval_probs=[np.full(i.size, 1.0 / i.size) for i in space.issues],
            concession_speed=concession_speed,
            sigma=sigma,
        )

    def expected_weight(self, j: int) -> float:
        return float(np.dot(self.weight_hyps[j], self.weight_probs[j]))

    def expected_evaluation(self, j: int, option_index: int) -> float:
        return float(np.dot(self.tri_tables[j][:, option_index], self.eval_probs[j]))

    def copy(self) -> "ScalablePosterior":
        return ScalablePosterior(
            space=self.space,
            weight_hyps=[w.copy() for w in self.weight_hyps],
            weight_probs=[p.copy() for p in self.weight_probs],
            eval_probs=[p.copy() for p in self.eval_probs],
            concession_speed=self.concession_speed,
            sigma=self.sigma,
            resets=self.resets,
            tri_tables=self.tri_tables,
        )


def _renormalize(vector: np.ndarray) -> tuple[np.ndarray, bool]:
    total = vector.sum()
    if total <= 0.0:
        return np.full_like(vector, 1.0 / len(vector)), True
    return vector / total, False


def scalable_update(
    state: ScalablePosterior, received: tuple[Offer, float], deadline: float
) -> ScalablePosterior:
    """Per-issue Bayesian update: each weight (or evaluator) hypothesis is
    scored by swapping it into the otherwise-expected utility of the
    received offer. Expectations are taken from the pre-update posteriors.
    """
    offer, t = received
    if t > deadline:
        raise ValueError("observation after the deadline")
    mean = 1.0 - state.concession_speed * (t / deadline)
    issues = state.space.issues
    exp_w = [state.expected_weight(j) for j in range(len(issues))]
    exp_v = [state.expected_evaluation(j, offer[j]) for j in range(len(issues))]

    new = state.copy()
    for j in range(len(issues)):
        rest = sum(exp_w[k] * exp_v[k] for k in range(len(issues)) if k != j)
        swapped_w = rest + new.weight_hyps[j] * exp_v[j]
        lik = np.maximum(gaussian_density(swapped_w, mean, state.sigma), LIKELIHOOD_FLOOR)
        probs, reset = _renormalize(new.weight_probs[j] * lik)
        new.weight_probs[j] = probs
        if reset:
            log.debug("scalable weight posterior underflowed for issue %d", j)
            new.resets += 1

        peak_values = new.tri_tables[j][:, offer[j]]
        swapped_v = rest + exp_w[j] * peak_values
        lik = np.maximum(gaussian_density(swapped_v, mean, state.sigma), LIKELIHOOD_FLOOR)
        probs, reset = _renormalize(new.eval_probs[j] * lik)
        new.eval_probs[j] = probs
        if reset:
            log.debug("scalable evaluator posterior underflowed for issue %d", j)
            new.resets += 1
    return new


def scalable_expected_utility(state: ScalablePosterior, offer: Offer) -> float:
    return sum(
        state.expected_weight(j) * state.expected_evaluation(j, offer[j])
        for j in range(len(state.space.issues))
    )


def scalable_expected_values(state: ScalablePosterior) -> np.ndarray:
    """Expected utility of every offer in canonical order."""
    columns = state.space.option_columns()
    out = np.zeros(state.space.size)
    for j in range(len(state.space.issues)):
        per_option = state.expected_weight(j) * (state.tri_tables[j].T @ state.eval_probs[j])
        out += per_option[columns[:, j]]
    return out


# ---------------------------------------------------------------------------
# Frequency analysis
# ---------------------------------------------------------------------------

@dataclass
class FrequencyState:
    space: OfferSpace
    counts: list[np.ndarray]
    num_received: int = 0

    @classmethod
    def empty(cls, space: OfferSpace) -> "FrequencyState":
        return cls(space, [np.zeros(issue.size) for issue in space.issues])


def frequency_update(state: FrequencyState, received_offer: Offer) -> FrequencyState:
    counts = [c.copy() for c in state.counts]
    for j, x in enumerate(received_offer):
        counts[j][x] += 1.0
    return FrequencyState(state.space, counts, state.num_received + 1)


def frequency_estimates(state: FrequencyState) -> tuple[list[float], list[list[float]]]:
    """(weights, evaluations): option values are relative proposal
    frequencies; issue weights the peak frequency, renormalized to sum 1.
    With no observations both fall back to uniform."""
    issues = state.space.issues
    if state.num_received == 0:
        weights = [1.0 / len(issues)] * len(issues)
        evals = [[1.0 / issue.size] * issue.size for issue in issues]
        return weights, evals
    evals = [(c / state.num_received).tolist() for c in state.counts]
    raw_weights = [float(c.max()) / state.num_received for c in state.counts]
    total = sum(raw_weights)
    return [w / total for w in raw_weights], evals


# ---------------------------------------------------------------------------
# Gaussian-process concession prediction
# ---------------------------------------------------------------------------

class GpNumericalError(RuntimeError):
    """Covariance matrix could not be factorized."""


@dataclass(frozen=True)
class GpKernel:
    """Matern kernel parameters; only smoothness 3/2 has the analytic form
    used here."""

    length_scale: float
    variance: float = 0.25
    smoothness: float = 1.5
    noise: float = 1e-8

    def __post_init__(self) -> None:
        if self.length_scale <= 0 or self.variance <= 0:
            raise ValueError("length_scale and variance must be positive")
        if self.smoothness != 1.5:
            raise ValueError("only Matern smoothness 3/2 is supported")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        dist = np.abs(np.subtract.outer(np.asarray(a, float), np.asarray(b, float)))
        scaled = math.sqrt(3.0) * dist / self.length_scale
        return self.variance * (1.0 + scaled) * np.exp(-scaled)


@dataclass(frozen=True)
class GpPredictor:
    kernel: GpKernel
    window_size: float
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    values: np.ndarray = field(default_factory=lambda: np.empty(0))
    prior_mean: float = 0.5
    _chol: np.ndarray | None = None
    _alpha: np.ndarray | None = None


def window_observations(
    observations: Sequence[tuple[float, float]], window_size: float
) -> list[tuple[float, float]]:
    """Keep only the highest-utility observation per time window."""
    if window_size <= 0:
        raise ValueError("window_size must be positive")
    best: dict[int, tuple[float, float]] = {}
    for t, z in observations:
        w = int(t // window_size)
        if w not in best or z > best[w][1]:
            best[w] = (t, z)
    return sorted(best.values())


def gp_fit(
    predictor: GpPredictor, observations: Sequence[tuple[float, float]]
) -> GpPredictor:
    windowed = window_observations(observations, predictor.window_size)
    if not windowed:
        return replace(predictor, times=np.empty(0), values=np.empty(0),
                       prior_mean=0.5, _chol=None, _alpha=None)
    times = np.array([t for t, _ in windowed])
    values = np.array([z for _, z in windowed])
    prior_mean = float(values.mean())
    cov = predictor.kernel(times, times) + predictor.kernel.noise * np.eye(len(times))
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise GpNumericalError(f"covariance not positive definite: {exc}") from exc
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, values - prior_mean))
    return replace(predictor, times=times, values=values, prior_mean=prior_mean,
                   _chol=chol, _alpha=alpha)


def gp_predict(predictor: GpPredictor, t_query: float) -> tuple[float, float]:
    """Mean and standard deviation of the next offered utility at
    ``t_query``, conditioned on the windowed observations."""
    kernel = predictor.kernel
    prior_var = kernel.variance + kernel.noise
    if len(predictor.times) == 0:
        return predictor.prior_mean, math.sqrt(prior_var)
    k_star = kernel(np.array([t_query]), predictor.times)[0]
    mean = predictor.prior_mean + float(k_star @ predictor._alpha)
    v = np.linalg.solve(predictor._chol, k_star)
    var = prior_var - float(v @ v)
    return mean, math.sqrt(max(var, 0.0))


def acceptance_probability(predictor: GpPredictor, z: float, t_query: float) -> float:
    """P(next offered utility exceeds z) under the Gaussian prediction."""
    mean, std = gp_predict(predictor, t_query)
    if std == 0.0:
        if z < mean:
            return 1.0
        return 0.5 if z == mean else 0.0
    return 0.5 * math.erfc((z - mean) / (std * math.sqrt(2.0)))


def optimal_target(
    predictor: GpPredictor, t_query: float, candidate_grid: Sequence[float]
) -> float:
    """Grid argmax of target * acceptance probability; ties go to the
    larger target."""
    if not candidate_grid:
        raise ValueError("candidate grid must be nonempty")
    best_beta, best_score = None, -math.inf
    for beta in sorted(candidate_grid):
        score = beta * acceptance_probability(predictor, beta, t_query)
        if score >= best_score:
            best_beta, best_score = beta, score
    return float(best_beta)


# ---------------------------------------------------------------------------
# Model handles used by strategies
# ---------------------------------------------------------------------------

class OpponentUtilityModel:
    """Common surface: feed received proposals, read estimated utilities."""

    def observe(self, offer: Offer, time: float) -> None:
        raise NotImplementedError

    def utility_values(self) -> np.ndarray:
        """Estimated opponent utility of every offer in canonical order."""
        raise NotImplementedError

    def expected_utility(self, offer: Offer) -> float:
        raise NotImplementedError


class BayesUtilityModel(OpponentUtilityModel):
    def __init__(self, space: OfferSpace, deadline: float,
                 concession_speed: float = DEFAULT_CONCESSION_SPEED,
                 sigma: float = DEFAULT_SIGMA,
                 weight_grid: Sequence[float] = DEFAULT_WEIGHT_GRID):
        if not math.isfinite(deadline):
            raise ValueError("Bayesian learning needs a finite deadline")
        self.space = space
        self.deadline = deadline
        self.hypotheses = HypothesisSet.build(space, weight_grid)
        self.posterior = BayesPosterior.uniform(len(self.hypotheses), concession_speed, sigma)
        self._values: np.ndarray | None = None

    def observe(self, offer: Offer, time: float) -> None:
        self.posterior = bayes_update(
            self.posterior, self.hypotheses, (offer, min(time, self.deadline)), self.deadline
        )
        self._values = None

    def utility_values(self) -> np.ndarray:
        if self._values is None:
            self._values = self.hypotheses.expected_values(self.posterior.probs)
        return self._values

    def expected_utility(self, offer: Offer) -> float:
        return bayes_expected_utility(self.posterior, self.hypotheses, offer)


class ScalableBayesModel(OpponentUtilityModel):
    def __init__(self, space: OfferSpace, deadline: float,
                 concession_speed: float = DEFAULT_CONCESSION_SPEED,
                 sigma: float = DEFAULT_SIGMA,
                 weight_grid: Sequence[float] = DEFAULT_WEIGHT_GRID):
        if not math.isfinite(deadline):
            raise ValueError("Bayesian learning needs a finite deadline")
        self.space = space
        self.deadline = deadline
        self.state = ScalablePosterior.uniform(space, weight_grid, concession_speed, sigma)
        self._values: np.ndarray | None = None

    def observe(self, offer: Offer, time: float) -> None:
        self.state = scalable_update(
            self.state, (offer, min(time, self.deadline)), self.deadline
        )
        self._values = None

    def utility_values(self) -> np.ndarray:
        if self._values is None:
            self._values = scalable_expected_values(self.state)
        return self._values

    def expected_utility(self, offer: Offer) -> float:
        return scalable_expected_utility(self.state, offer)


class FrequencyModel(OpponentUtilityModel):
    def __init__(self, space: OfferSpace):
        self.space = space
        self.state = FrequencyState.empty(space)
        self._values: np.ndarray | None = None

    def observe(self, offer: Offer, time: float) -> None:
        self.state = frequency_update(self.state, offer)
        self._values = None

    def utility_values(self) -> np.ndarray:
        if self._values is None:
            weights, evals = frequency_estimates(self.state)
            columns = self.space.option_columns()
            out = np.zeros(self.space.size)
            for j, (w, row) in enumerate(zip(weights, evals)):
                out += w * np.asarray(row)[columns[:, j]]
            self._values = out
        return self._values

    def expected_utility(self, offer: Offer) -> float:
        return float(self.utility_values()[self.space.index_of(offer)])


class DummyModel(OpponentUtilityModel):
    """The opponent's true utility plus seeded Gaussian noise; a stand-in
    for a perfect-but-noisy opponent model in experiments."""

    def __init__(self, space: OfferSpace, true_values: np.ndarray,
                 noise: float = 0.05, seed: int = 0):
        rng = random.Random(seed)
        self.space = space
        self._values = np.array(
            [v + noise * rng.gauss(0.0, 1.0) for v in np.asarray(true_values, float)]
        )

    def observe(self, offer: Offer, time: float) -> None:
        pass

    def utility_values(self) -> np.ndarray:
        return self._values

    def expected_utility(self, offer: Offer) -> float:
        return float(self._values[self.space.index_of(offer)])


class GpConcessionPredictor:
    """Tracks the own-utility value of every received proposal and predicts,
    via the Gaussian process, how good the opponent's future offers will be."""

    def __init__(self, deadline: float, length_scale: float | None = None,
                 window_size: float | None = None, variance: float = 0.25,
                 noise: float = 1e-8):
        if not math.isfinite(deadline):
            raise ValueError("concession prediction needs a finite deadline")
        self.deadline = deadline
        kernel = GpKernel(length_scale or 0.2 * deadline, variance, noise=noise)
        self.predictor = GpPredictor(kernel, window_size or deadline / 20.0)
        self.observations: list[tuple[float, float]] = []
        self._dirty = False

    def observe(self, time: float, own_utility: float) -> None:
        self.observations.append((time, own_utility))
        self._dirty = True

    def set_observations(self, observations: Sequence[tuple[float, float]]) -> None:
        """Replace the tracked series, e.g. when past values get re-estimated."""
        self.observations = list(observations)
        self._dirty = True

    def _refit(self) -> None:
        if self._dirty:
            self.predictor = gp_fit(self.predictor, self.observations)
            self._dirty = False

    def predict(self, t_query: float) -> tuple[float, float]:
        self._refit()
        return gp_predict(self.predictor, t_query)

    def optimal_target(self, t_query: float, grid: Sequence[float]) -> float:
        self._refit()
        return optimal_target(self.predictor, t_query, grid)
