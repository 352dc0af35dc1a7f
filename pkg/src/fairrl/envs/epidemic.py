"""SIR epidemic on a social graph with one vaccine per step.

Actions ``0..n-1`` vaccinate that vertex; action ``n`` is the no-op. A
vaccinated susceptible goes straight to R before infections are drawn;
vaccinating anyone else executes as a no-op.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from fairrl import fairness, kernels
from fairrl.envs.base import Environment
from fairrl.envs.graph import girvan_newman_bipartition, read_edge_list, small_world
from fairrl.errors import ContractError

S, I, R = 0, 1, 2


@dataclass
class EpidemicConfig:
    n_nodes: int = 50
    mean_degree: int = 4
    rewire: float = 0.1
    graph_seed: int = 0
    edge_list: str = None
    infection: float = 0.1
    recovery: float = 0.05
    initial_infected: int = 3
    window: int = 50
    episode_length: int = 100

    def __post_init__(self):
        for name in ("infection", "recovery", "rewire"):
            if not 0 <= getattr(self, name) <= 1:
                raise ContractError(f"{name} must lie in [0, 1]")
        if self.window < 1 or self.episode_length < 1:
            raise ContractError("window and episode length must be positive")


@lru_cache(maxsize=16)
def _default_graph(n, mean_degree, rewire, seed):
    g = small_world(n, mean_degree, rewire, seed)
    girvan_newman_bipartition(g)
    return g


def infection_probability(n_infected_neighbors, infection):
    return 1.0 - (1.0 - infection) ** np.asarray(n_infected_neighbors)


def eo_vaccine_gap(totals):
    """|v+/(n+ + 1) - v-/(n- + 1)| from window totals (v+, v-, n+, n-)."""
    v_pos, v_neg, n_pos, n_neg = (int(x) for x in totals[:4])
    return abs(v_pos / (n_pos + 1) - v_neg / (n_neg + 1))


def health_gap(health, community):
    """Total variation between the two communities' S/I/R compositions."""
    dists = []
    for c in (0, 1):
        h = health[community == c]
        dists.append(np.bincount(h, minlength=3) / max(h.size, 1))
    return fairness.total_variation(dists[0], dists[1])


class EpidemicEnv(Environment):
    name = "epidemic"
    default_schedule = fairness.EPIDEMIC_SCHEDULE
    default_reg_weight = 0.25
    default_delta = 0.05

    def __init__(self, config=None, graph=None):
        self.config = config or EpidemicConfig()
        c = self.config
        if graph is None:
            if c.edge_list:
                graph = read_edge_list(c.edge_list)
            else:
                graph = _default_graph(c.n_nodes, c.mean_degree, c.rewire, c.graph_seed)
        self.graph = graph
        if graph.community is None:
            girvan_newman_bipartition(graph)
        self.community = graph.community
        self.n = graph.n
        if not 0 <= c.initial_infected < self.n:
            raise ContractError("initial infected count must be below the population size")
        self.n_outputs = self.n + 1
        self.noop = self.n
        self.obs_dim = 3 * self.n
        self.window = fairness.CohortWindow(c.window, 4)

    def reset(self, seed):
        self.rng = np.random.default_rng(seed)
        self.health = np.full(self.n, S, dtype=np.int64)
        seeds = self.rng.choice(self.n, size=self.config.initial_infected, replace=False)
        self.health[seeds] = I
        self.window.clear()
        self.t = 0
        self._utility = 0.0
        self.invalid_vaccinations = 0
        return self.observe()

    def observe(self):
        obs = np.zeros((self.n, 3))
        obs[np.arange(self.n), self.health] = 1.0
        return obs.ravel()

    def infected_neighbors(self):
        g = self.graph
        return kernels.infected_neighbor_counts(g.indptr, g.indices, self.health == I)

    # -- fairness --------------------------------------------------------
    def _vaccine_record(self, action):
        rec = np.zeros(4, dtype=np.int64)
        if action != self.noop and self.health[action] == S:
            rec[self.community[action]] = 1
        return rec

    def short_term(self):
        return eo_vaccine_gap(self.window.totals)

    def short_term_if(self, action):
        # new infections of the step are not known yet; only the vaccine moves
        return eo_vaccine_gap(self.window.totals_with(self._vaccine_record(action)))

    def long_term(self, mode="train"):
        return health_gap(self.health, self.community)

    def massage(self, probs, action, threshold):
        """Swap the vaccine to the other community's closest-probability susceptible.

        Only applies when the sampled action vaccinates a susceptible vertex;
        the swap happens when the probability gap is below ``threshold`` and
        the swap strictly lowers the short-term gap.
        """
        if threshold <= 0 or action == self.noop or self.health[action] != S:
            return action, None
        other = np.flatnonzero((self.health == S) & (self.community != self.community[action]))
        if other.size == 0:
            return action, None
        gaps = np.abs(probs[other] - probs[action])
        cand = int(other[np.argmin(gaps)])  # argmin takes the lowest id on ties
        gap = float(abs(probs[cand] - probs[action]))
        if gap < threshold and self.short_term_if(cand) < self.short_term_if(action):
            return cand, gap
        return action, None

    # -- dynamics --------------------------------------------------------
    def step(self, action):
        action = int(action)
        if not 0 <= action <= self.noop:
            raise ContractError(f"action {action} outside 0..{self.noop}")
        c = self.config
        before = self.health.copy()
        vaccinated = -1
        if action != self.noop:
            if self.health[action] == S:
                self.health[action] = R
                vaccinated = action
            else:
                self.invalid_vaccinations += 1
        counts = self.infected_neighbors()
        p_inf = infection_probability(counts, c.infection)
        u_inf = self.rng.random(self.n)
        u_rec = self.rng.random(self.n)
        new_inf = (self.health == S) & (u_inf < p_inf)
        recovered = (self.health == I) & (u_rec < c.recovery)
        self.health[new_inf] = I
        self.health[recovered] = R
        rec = np.zeros(4, dtype=np.int64)
        if vaccinated >= 0:
            rec[self.community[vaccinated]] = 1
        rec[2] = int(np.sum(new_inf & (self.community == 0)))
        rec[3] = int(np.sum(new_inf & (self.community == 1)))
        self.window.push(rec)
        n_infected = int(np.sum(self.health == I))
        reward = 1.0 - n_infected / self.n
        self.t += 1
        self._utility += reward
        info = {
            "t": self.t - 1,
            "action": action,
            "vaccinated": vaccinated,
            "new_infected": int(new_inf.sum()),
            "before": before,
            "reward": reward,
        }
        return reward, info

    def counts_by_community(self):
        out = {}
        for c, tag in ((0, "pos"), (1, "neg")):
            h = self.health[self.community == c]
            for state, name in ((S, "S"), (I, "I"), (R, "R")):
                out[f"{name}_{tag}"] = int(np.sum(h == state))
        return out

    @property
    def done(self):
        return self.t >= self.config.episode_length
