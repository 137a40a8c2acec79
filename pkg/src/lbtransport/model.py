"""Decoupled system description: scatterer, tight-binding leads and the
finite-rank coupling between them.

All vectors are stored densely from site 1 (lead vectors) or as full
``M``-component tuples (scatterer vectors).  Everything is immutable once
:func:`validate_model` has returned.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12

__all__ = [
    "LeadSpec",
    "ScattererSpec",
    "CouplingTerm",
    "DirectContactTerm",
    "ReservoirState",
    "SystemModel",
    "ModelValidationError",
    "validate_model",
    "parse_complex",
    "band",
    "open_channels",
]


class ModelValidationError(ValueError):
    """Raised when a model description violates one or more invariants.

    ``violations`` holds one human-readable message per problem found.
    """

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class LeadSpec:
    id: int
    onsite: float
    hopping: float
    coupling_sites: tuple[int, ...] = ()

    @property
    def band(self) -> tuple[float, float]:
        return band(self)


@dataclass(frozen=True)
class ScattererSpec:
    matrix: tuple[tuple[complex, ...], ...]

    @property
    def dim(self) -> int:
        return len(self.matrix)

    @cached_property
    def array(self) -> np.ndarray:
        a = np.array(self.matrix, dtype=complex).reshape(self.dim, self.dim)
        a.flags.writeable = False
        return a


@dataclass(frozen=True)
class CouplingTerm:
    """One rank-one scatterer-lead term ``v (|s><f| + |f><s|)``."""

    lead: int
    strength: float
    scatterer_vector: tuple[complex, ...]
    lead_vector: tuple[complex, ...]


@dataclass(frozen=True)
class DirectContactTerm:
    """One rank-one lead-lead term ``v (|g_j><g_k| + |g_k><g_j|)``."""

    leads: tuple[int, int]
    strength: float
    vector_j: tuple[complex, ...]
    vector_k: tuple[complex, ...]


@dataclass(frozen=True)
class ReservoirState:
    beta: float
    mu: float

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError("beta must be positive")
        if not np.isfinite(self.mu):
            raise ValueError("mu must be finite")

    def x(self, E):
        """Scaled energy ``beta * (E - mu)``."""
        return self.beta * (np.asarray(E, dtype=float) - self.mu)


@dataclass(frozen=True)
class SystemModel:
    scatterer: ScattererSpec
    leads: tuple[LeadSpec, ...]
    couplings: tuple[CouplingTerm, ...] = ()
    contacts: tuple[DirectContactTerm, ...] = ()
    charge: float = 1.0
    _lead_index: dict = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "_lead_index", {ld.id: ld for ld in self.leads})

    @property
    def lead_ids(self) -> tuple[int, ...]:
        return tuple(ld.id for ld in self.leads)

    def lead(self, lead_id: int) -> LeadSpec:
        return self._lead_index[lead_id]

    def conjugate(self) -> SystemModel:
        """The time-reversed model: every complex amplitude conjugated."""
        conj = lambda vec: tuple(complex(z).conjugate() for z in vec)  # noqa: E731
        return SystemModel(
            scatterer=ScattererSpec(tuple(conj(row) for row in self.scatterer.matrix)),
            leads=self.leads,
            couplings=tuple(
                CouplingTerm(c.lead, c.strength, conj(c.scatterer_vector), conj(c.lead_vector))
                for c in self.couplings
            ),
            contacts=tuple(
                DirectContactTerm(c.leads, c.strength, conj(c.vector_j), conj(c.vector_k))
                for c in self.contacts
            ),
            charge=self.charge,
        )

    @property
    def is_real(self) -> bool:
        """True when every amplitude is real (time-reversal symmetric data)."""
        vals = [z for row in self.scatterer.matrix for z in row]
        for c in self.couplings:
            vals.extend(c.scatterer_vector)
            vals.extend(c.lead_vector)
        for c in self.contacts:
            vals.extend(c.vector_j)
            vals.extend(c.vector_k)
        return all(abs(complex(z).imag) == 0.0 for z in vals)

    def to_dict(self) -> dict[str, Any]:
        """Serialize with explicit ``[re, im]`` pairs (inverse of validate_model)."""
        pair = lambda z: [complex(z).real, complex(z).imag]  # noqa: E731
        sparse = lambda vec: {str(n + 1): pair(z) for n, z in enumerate(vec) if z != 0}  # noqa: E731
        return {
            "charge": self.charge,
            "scatterer": {"matrix": [[pair(z) for z in row] for row in self.scatterer.matrix]},
            "leads": [{"id": ld.id, "onsite": ld.onsite, "hopping": ld.hopping} for ld in self.leads],
            "couplings": [
                {
                    "lead": c.lead,
                    "strength": c.strength,
                    "scatterer_vector": [pair(z) for z in c.scatterer_vector],
                    "lead_vector": sparse(c.lead_vector),
                }
                for c in self.couplings
            ],
            "contacts": [
                {
                    "leads": list(c.leads),
                    "strength": c.strength,
                    "vector_j": sparse(c.vector_j),
                    "vector_k": sparse(c.vector_k),
                }
                for c in self.contacts
            ],
        }


def parse_complex(value: Any) -> complex:
    """Accept a number or an explicit ``[re, im]`` pair."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError(f"complex value must be an [re, im] pair, got {value!r}")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, (bool, str)) or value is None:
        raise ValueError(f"not a numeric value: {value!r}")
    return complex(value)


def _lead_vector(raw: Any) -> tuple[complex, ...]:
    """Dense site-1-based tuple from a sparse ``{site: amp}`` map or a sequence.

    Trailing zeros are trimmed.
    """
    if isinstance(raw, Mapping):
        entries = {}
        for key, amp in raw.items():
            site = int(key)
            if site < 1:
                raise ValueError(f"lead sites are 1-indexed, got site {site}")
            entries[site] = parse_complex(amp)
        n = max(entries, default=0)
        dense = [entries.get(s, 0j) for s in range(1, n + 1)]
    else:
        dense = [parse_complex(a) for a in raw]
    while dense and dense[-1] == 0:
        dense.pop()
    return tuple(dense)


def _orthonormality_defect(vectors: list[tuple[complex, ...]]) -> float:
    if not vectors:
        return 0.0
    n = max(len(v) for v in vectors)
    mat = np.zeros((n, len(vectors)), dtype=complex)
    for i, v in enumerate(vectors):
        mat[: len(v), i] = v
    gram = mat.conj().T @ mat
    return float(np.max(np.abs(gram - np.eye(len(vectors)))))


def _get(raw: Any, name: str, default: Any = None) -> Any:
    if isinstance(raw, Mapping):
        return raw.get(name, default)
    return getattr(raw, name, default)


def validate_model(description: Mapping[str, Any] | SystemModel) -> SystemModel:
    """Validate a raw model description and return an immutable model.

    ``description`` is either a mapping shaped like the config file (complex numbers
    given as ``[re, im]`` pairs or Python numbers, lead vectors as sparse
    ``{site: amplitude}`` maps or dense sequences) or an existing
    :class:`SystemModel`, in which case the result compares equal to it.

    Raises :class:`ModelValidationError` listing every violation found.
    """
    errors: list[str] = []

    # scatterer
    raw_s = _get(description, "scatterer")
    raw_matrix = _get(raw_s, "matrix") if raw_s is not None else None
    matrix: tuple[tuple[complex, ...], ...] = ()
    if raw_matrix is None:
        errors.append("scatterer: missing matrix")
    else:
        try:
            rows = [tuple(parse_complex(z) for z in row) for row in raw_matrix]
        except (TypeError, ValueError) as exc:
            errors.append(f"scatterer: {exc}")
            rows = []
        if rows:
            m = len(rows)
            if any(len(r) != m for r in rows):
                errors.append("scatterer: matrix must be square")
            else:
                a = np.array(rows, dtype=complex)
                scale = max(1.0, float(np.max(np.abs(a))))
                if np.max(np.abs(a - a.conj().T)) > HERMITIAN_TOL * scale:
                    errors.append("scatterer not self-adjoint")
                if not np.all(np.isfinite(a)):
                    errors.append("scatterer: non-finite entries")
                matrix = tuple(rows)
        elif raw_matrix is not None and not errors:
            errors.append("scatterer: matrix must have dimension >= 1")
    M = len(matrix)

    # leads
    lead_rows = []
    seen: set[int] = set()
    for i, raw in enumerate(_get(description, "leads") or ()):
        try:
            lid = int(_get(raw, "id"))
            onsite = float(_get(raw, "onsite", 0.0))
            hopping = float(_get(raw, "hopping"))
        except (TypeError, ValueError):
            errors.append(f"leads[{i}]: id, onsite and hopping must be numbers")
            continue
        if lid in seen:
            errors.append(f"leads[{i}]: duplicate lead id {lid}")
            continue
        if not hopping > 0:
            errors.append(f"leads[{i}]: hopping must be positive")
        seen.add(lid)
        lead_rows.append((lid, onsite, hopping))
    if not lead_rows:
        errors.append("model needs at least one lead")
    lead_ids = {r[0] for r in lead_rows}
    sites: dict[int, set[int]] = {lid: set() for lid in lead_ids}

    # scatterer-lead couplings
    couplings = []
    for i, raw in enumerate(_get(description, "couplings") or ()):
        try:
            lead = int(_get(raw, "lead"))
            strength = float(_get(raw, "strength"))
            svec = tuple(parse_complex(z) for z in _get(raw, "scatterer_vector"))
            fvec = _lead_vector(_get(raw, "lead_vector"))
        except (TypeError, ValueError) as exc:
            errors.append(f"couplings[{i}]: {exc}")
            continue
        if lead not in lead_ids:
            errors.append(f"couplings[{i}]: unknown lead {lead}")
            continue
        if not strength > 0:
            errors.append(f"couplings[{i}]: strength must be positive")
        if len(svec) != M:
            errors.append(f"couplings[{i}]: scatterer_vector must have {M} components")
            continue
        if abs(np.linalg.norm(svec) - 1) > NORM_TOL:
            errors.append(f"couplings[{i}]: scatterer_vector not normalized")
        if abs(np.linalg.norm(fvec) - 1) > NORM_TOL:
            errors.append(f"couplings[{i}]: lead_vector not normalized")
        sites[lead].update(n + 1 for n, z in enumerate(fvec) if z != 0)
        couplings.append(CouplingTerm(lead, strength, svec, fvec))

    for lid in lead_ids:
        members = [(i, c) for i, c in enumerate(couplings) if c.lead == lid]
        if len(members) > 1:
            idx = [i for i, _ in members]
            if _orthonormality_defect([c.lead_vector for _, c in members]) > NORM_TOL:
                errors.append(f"couplings{idx}: lead vectors not orthonormal on lead {lid}")
            if _orthonormality_defect([c.scatterer_vector for _, c in members]) > NORM_TOL:
                errors.append(f"couplings{idx}: scatterer vectors not orthonormal for lead {lid}")

    # direct lead-lead contacts
    contacts = []
    for i, raw in enumerate(_get(description, "contacts") or ()):
        try:
            j, k = (int(x) for x in _get(raw, "leads"))
            strength = float(_get(raw, "strength"))
            gj = _lead_vector(_get(raw, "vector_j"))
            gk = _lead_vector(_get(raw, "vector_k"))
        except (TypeError, ValueError) as exc:
            errors.append(f"contacts[{i}]: {exc}")
            continue
        if j == k:
            errors.append(f"contacts[{i}]: a contact must join two different leads")
            continue
        if j not in lead_ids or k not in lead_ids:
            errors.append(f"contacts[{i}]: unknown lead in pair ({j}, {k})")
            continue
        if not strength > 0:
            errors.append(f"contacts[{i}]: strength must be positive")
        for name, vec in (("vector_j", gj), ("vector_k", gk)):
            if abs(np.linalg.norm(vec) - 1) > NORM_TOL:
                errors.append(f"contacts[{i}]: {name} not normalized")
        sites[j].update(n + 1 for n, z in enumerate(gj) if z != 0)
        sites[k].update(n + 1 for n, z in enumerate(gk) if z != 0)
        contacts.append(DirectContactTerm((j, k), strength, gj, gk))

    pairs = {frozenset(c.leads) for c in contacts}
    for pair in pairs:
        members = [(i, c) for i, c in enumerate(contacts) if frozenset(c.leads) == pair]
        if len(members) < 2:
            continue
        for lid in pair:
            vecs = [c.vector_j if c.leads[0] == lid else c.vector_k for _, c in members]
            if _orthonormality_defect(vecs) > NORM_TOL:
                idx = [i for i, _ in members]
                errors.append(f"contacts{idx}: contact vectors not orthonormal on lead {lid}")

    try:
        charge = float(_get(description, "charge", 1.0))
    except (TypeError, ValueError):
        charge = float("nan")
    if not charge > 0:
        errors.append("charge must be positive")

    if errors:
        raise ModelValidationError(errors)

    leads = tuple(
        LeadSpec(lid, onsite, hopping, tuple(sorted(sites[lid])))
        for lid, onsite, hopping in sorted(lead_rows)
    )
    return SystemModel(
        scatterer=ScattererSpec(matrix),
        leads=leads,
        couplings=tuple(couplings),
        contacts=tuple(contacts),
        charge=charge,
    )


def band(lead: LeadSpec) -> tuple[float, float]:
    """Continuous spectrum ``[eps - 2t, eps + 2t]`` of a semi-infinite chain."""
    return (lead.onsite - 2 * lead.hopping, lead.onsite + 2 * lead.hopping)


def band_intersection(a: LeadSpec, b: LeadSpec) -> tuple[float, float] | None:
    """Common band of two leads, or None when it has zero length."""
    lo = max(band(a)[0], band(b)[0])
    hi = min(band(a)[1], band(b)[1])
    return (lo, hi) if hi > lo else None


def open_channels(model: SystemModel, E: float) -> tuple[int, ...]:
    """Ids (ascending) of the leads whose open band interior contains ``E``."""
    out = []
    for ld in model.leads:
        lo, hi = band(ld)
        if lo < E < hi:
            out.append(ld.id)
    return tuple(out)


def band_edges(model: SystemModel) -> list[float]:
    return sorted({e for ld in model.leads for e in band(ld)})


def lead_vectors(model: SystemModel, lead_id: int) -> Iterable[tuple[complex, ...]]:
    for c in model.couplings:
        if c.lead == lead_id:
            yield c.lead_vector
    for c in model.contacts:
        if c.leads[0] == lead_id:
            yield c.vector_j
        if c.leads[1] == lead_id:
            yield c.vector_k
