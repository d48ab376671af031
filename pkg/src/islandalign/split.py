"""Doctor-disjoint train/test split with gender balance and disease-area strata.

Picking the test set is an assignment problem: every test conversation needs
a distinct doctor, each stratum needs a fixed number of conversations, and
(optionally) each gender supplies half. It is solved as a max flow

    source -> gender (k/2 each) -> doctor (1) -> stratum (1) -> sink (quota)

which saturates exactly when the constraints are jointly satisfiable.
Doctors enter the graph in a seeded random order, so the chosen set varies
with the seed but is reproducible for a fixed one.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import networkx as nx

from .corpus import Conversation
from .sim import TARGET_AREAS, make_rng

NONTARGET = "__nontarget__"


class SplitInfeasible(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    k_test: int = 100
    target_disease_areas: tuple[str, ...] = TARGET_AREAS
    n_target_test: int = 64
    n_nontarget_test: int = 36
    require_gender_balance: bool = True

    def __post_init__(self):
        object.__setattr__(self, "target_disease_areas", tuple(self.target_disease_areas))
        if self.n_target_test + self.n_nontarget_test != self.k_test:
            raise ValueError("n_target_test + n_nontarget_test must equal k_test")
        if min(self.k_test, self.n_target_test, self.n_nontarget_test) < 0:
            raise ValueError("split counts must be non-negative")
        if self.n_target_test and not self.target_disease_areas:
            raise ValueError("n_target_test > 0 needs target disease areas")

    def quotas(self) -> dict[str, int]:
        """Per-stratum test counts; target areas share ``n_target_test`` evenly,
        remainders going to the first areas in sorted order."""
        out = {}
        areas = sorted(set(self.target_disease_areas))
        if areas:
            base, extra = divmod(self.n_target_test, len(areas))
            for k, area in enumerate(areas):
                out[area] = base + (1 if k < extra else 0)
        out[NONTARGET] = self.n_nontarget_test
        return out


def stratum_of(conv: Conversation, spec: SplitSpec) -> str:
    area = conv.metadata.disease_area
    return area if area in spec.target_disease_areas else NONTARGET


def _diagnose(conversations, spec, quotas) -> str:
    doctors_by_gender = defaultdict(set)
    for c in conversations:
        doctors_by_gender[c.metadata.doctor_gender].add(c.metadata.doctor_id)
    n_doctors = len({c.metadata.doctor_id for c in conversations})
    if n_doctors < spec.k_test:
        return f"distinct doctors: need {spec.k_test}, corpus has {n_doctors}"
    if spec.require_gender_balance:
        if spec.k_test % 2:
            return f"gender balance: k_test={spec.k_test} is odd"
        for g in ("M", "F"):
            if len(doctors_by_gender[g]) < spec.k_test // 2:
                return (f"gender balance: need {spec.k_test // 2} {g} doctors, "
                        f"corpus has {len(doctors_by_gender[g])}")
    for stratum, quota in quotas.items():
        docs = {c.metadata.doctor_id for c in conversations if stratum_of(c, spec) == stratum}
        if len(docs) < quota:
            name = "non-target areas" if stratum == NONTARGET else stratum
            return f"stratification: {name} needs {quota} doctors, corpus has {len(docs)}"
    return "constraints are individually satisfiable but not jointly (doctor/stratum/gender conflict)"


def split_corpus(conversations: Sequence[Conversation], spec: SplitSpec = SplitSpec(),
                 seed: int = 0) -> tuple[list[str], list[str]]:
    """``(train_ids, test_ids)``, both sorted.

    Train excludes every conversation of a test doctor.
    """
    ids = [c.conversation_id for c in conversations]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate conversation ids")
    quotas = spec.quotas()
    rng = make_rng(seed, 2)

    by_doctor: dict[str, list[Conversation]] = defaultdict(list)
    gender: dict[str, str] = {}
    for c in sorted(conversations, key=lambda c: c.conversation_id):
        d = c.metadata.doctor_id
        by_doctor[d].append(c)
        if gender.setdefault(d, c.metadata.doctor_gender) != c.metadata.doctor_gender:
            raise ValueError(f"doctor {d} has conflicting genders")
    doctors = sorted(by_doctor)
    doctors = [doctors[k] for k in rng.permutation(len(doctors))]

    # Integer node ids: networkx keeps some node sets internally, and string
    # hashes are salted per process, which would make the flow (and the split)
    # depend on PYTHONHASHSEED.
    SRC, SINK = 0, 1
    ids: dict[tuple[str, str], int] = {}

    def node(kind: str, name: str) -> int:
        return ids.setdefault((kind, name), len(ids) + 2)

    G = nx.DiGraph()
    half = spec.k_test // 2
    for d in doctors:
        if spec.require_gender_balance:
            G.add_edge(SRC, node("g", gender[d]), capacity=half)
            G.add_edge(node("g", gender[d]), node("d", d), capacity=1)
        else:
            G.add_edge(SRC, node("d", d), capacity=1)
        for s in sorted({stratum_of(c, spec) for c in by_doctor[d]}):
            if quotas.get(s, 0) > 0:
                G.add_edge(node("d", d), node("s", s), capacity=1)
    for s, q in quotas.items():
        if q > 0:
            G.add_edge(node("s", s), SINK, capacity=q)

    if spec.k_test == 0:
        flow_value, flow = 0, {}
    elif SRC not in G or SINK not in G or (spec.require_gender_balance and spec.k_test % 2):
        flow_value, flow = -1, {}
    else:
        flow_value, flow = nx.maximum_flow(G, SRC, SINK)
    if flow_value != spec.k_test:
        raise SplitInfeasible(_diagnose(conversations, spec, quotas))

    stratum_name = {v: name for (kind, name), v in ids.items() if kind == "s"}
    test = []
    for d in doctors:
        for v, f in sorted(flow.get(ids.get(("d", d)), {}).items()):
            if f:
                pool = [c for c in by_doctor[d] if stratum_of(c, spec) == stratum_name[v]]
                test.append(pool[int(rng.integers(len(pool)))].conversation_id)
    test_doctors = {c.metadata.doctor_id for c in conversations if c.conversation_id in set(test)}
    train = [c.conversation_id for c in conversations if c.metadata.doctor_id not in test_doctors]
    return sorted(train), sorted(test)
