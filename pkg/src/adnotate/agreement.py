"""Inter-annotator agreement metrics and report building.

The label matrix is annotators x items with missing cells allowed. All metric
functions are pure; the report builder assembles the full metric bundle
(per-group agreement, pairwise statistics, model-bias probe, relative
differences between paired groups) in machine-readable and aligned-text form.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import NotFoundError, ParseError, UndefinedMetricError, ValidationError

MISSING = 0
SPONSORED = 1
NON_SPONSORED = 2

LABEL_CODES = {"Sponsored": SPONSORED, "NonSponsored": NON_SPONSORED}
CODE_LABELS = {code: name for name, code in LABEL_CODES.items()}


@dataclass
class LabelMatrix:
    """Ordered annotators x items grid of {Sponsored, NonSponsored, missing}."""

    annotators: list[str]
    items: list[str]
    cells: np.ndarray  # shape (len(annotators), len(items)), int8 label codes

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int8)
        if self.cells.shape != (len(self.annotators), len(self.items)):
            raise ValidationError(
                f"cell grid shape {self.cells.shape} does not match "
                f"{len(self.annotators)} annotators x {len(self.items)} items"
            )

    @classmethod
    def from_records(cls, records: Iterable[tuple[str, str, str]]) -> "LabelMatrix":
        """Build a matrix from (annotator_id, post_id, label) rows.

        Annotator and item order follow first appearance; absent rows stay missing.
        """
        annotators: list[str] = []
        items: list[str] = []
        a_index: dict[str, int] = {}
        i_index: dict[str, int] = {}
        triples: list[tuple[int, int, int]] = []
        for annotator, item, label in records:
            if label not in LABEL_CODES:
                raise ParseError(f"unknown label {label!r}")
            if annotator not in a_index:
                a_index[annotator] = len(annotators)
                annotators.append(annotator)
            if item not in i_index:
                i_index[item] = len(items)
                items.append(item)
            triples.append((a_index[annotator], i_index[item], LABEL_CODES[label]))
        cells = np.zeros((len(annotators), len(items)), dtype=np.int8)
        for a, i, code in triples:
            cells[a, i] = code
        return cls(annotators, items, cells)

    def restrict(self, annotator_ids: Sequence[str]) -> "LabelMatrix":
        """Row-restricted copy keeping this matrix's item order."""
        index = {a: i for i, a in enumerate(self.annotators)}
        missing = [a for a in annotator_ids if a not in index]
        if missing:
            raise NotFoundError(f"annotators not in matrix: {missing}")
        rows = [index[a] for a in annotator_ids]
        return LabelMatrix(list(annotator_ids), list(self.items), self.cells[rows, :])

    def pair_view(self, a: str, b: str) -> "LabelMatrix":
        """Two-annotator matrix restricted to items both rated."""
        sub = self.restrict([a, b])
        both = (sub.cells[0] != MISSING) & (sub.cells[1] != MISSING)
        items = [item for item, keep in zip(sub.items, both) if keep]
        return LabelMatrix([a, b], items, sub.cells[:, both])

    def rated_counts(self) -> np.ndarray:
        """Per-item number of non-missing ratings (m_u)."""
        return (self.cells != MISSING).sum(axis=0)


def _coincidence(matrix: LabelMatrix) -> tuple[np.ndarray, float]:
    """Accumulate the coincidence matrix over items with m_u >= 2.

    Each such item adds count_c * count_k (c != k) and count_c * (count_c - 1)
    (c == k) ordered pairs, weighted by 1 / (m_u - 1).
    """
    n_codes = int(matrix.cells.max(initial=0)) + 1
    coincidence = np.zeros((n_codes, n_codes))
    pairable = 0
    for u in range(len(matrix.items)):
        column = matrix.cells[:, u]
        counts = np.bincount(column[column != MISSING], minlength=n_codes).astype(float)
        m_u = counts.sum()
        if m_u < 2:
            continue
        pairable += 1
        pairs = np.outer(counts, counts)
        np.fill_diagonal(pairs, counts * (counts - 1.0))
        coincidence += pairs / (m_u - 1.0)
    return coincidence, pairable


def krippendorff_alpha(matrix: LabelMatrix) -> float:
    """Nominal-metric Krippendorff's alpha with missing data, in [-1, 1].

    Via the coincidence matrix o: D_o = (1/n) sum_{c!=k} o_ck and
    D_e = sum_{c!=k} n_c n_k / (n (n-1)) with n_c the category marginals;
    alpha = 1 - D_o / D_e. When every rating falls in one category both
    disagreements are zero and alpha is 1 by convention.
    """
    if len(matrix.annotators) < 2:
        raise UndefinedMetricError("alpha needs at least 2 annotators")
    coincidence, pairable = _coincidence(matrix)
    if pairable == 0:
        raise UndefinedMetricError("no item carries two or more ratings")
    n_c = coincidence.sum(axis=1)
    n = n_c.sum()
    off_diagonal = coincidence.sum() - np.trace(coincidence)
    d_o = off_diagonal / n
    d_e = (np.outer(n_c, n_c).sum() - (n_c * n_c).sum()) / (n * (n - 1.0))
    if d_e == 0.0:
        return 1.0
    return float(1.0 - d_o / d_e)


def absolute_agreement(matrix: LabelMatrix) -> float:
    """Fraction of items (m_u >= 2) whose non-missing labels are all identical."""
    eligible = 0
    unanimous = 0
    for u in range(len(matrix.items)):
        column = matrix.cells[:, u]
        ratings = column[column != MISSING]
        if ratings.size < 2:
            continue
        eligible += 1
        if (ratings == ratings[0]).all():
            unanimous += 1
    if eligible == 0:
        raise UndefinedMetricError("no item carries two or more ratings")
    return unanimous / eligible


def at_most_one_disagreement(matrix: LabelMatrix) -> float:
    """Fraction of items where removing at most one rating makes it unanimous.

    Equivalent to: some label accounts for at least m_u - 1 of the ratings.
    """
    eligible = 0
    within_one = 0
    for u in range(len(matrix.items)):
        column = matrix.cells[:, u]
        ratings = column[column != MISSING]
        if ratings.size < 2:
            continue
        eligible += 1
        counts = np.bincount(ratings)
        if counts.max() >= ratings.size - 1:
            within_one += 1
    if eligible == 0:
        raise UndefinedMetricError("no item carries two or more ratings")
    return within_one / eligible


def disclosed_accuracy(matrix: LabelMatrix, disclosed_ids: Iterable[str]) -> float:
    """Fraction of (annotator, disclosed item) judgements labelled Sponsored.

    Judgements are pooled across annotators rather than averaged per annotator,
    so the value is a ratio of two integer counts.
    """
    disclosed = set(disclosed_ids)
    if not disclosed:
        raise UndefinedMetricError("disclosed set is empty")
    unknown = disclosed - set(matrix.items)
    if unknown:
        raise NotFoundError(f"disclosed ids not in matrix: {sorted(unknown)}")
    columns = [u for u, item in enumerate(matrix.items) if item in disclosed]
    sub = matrix.cells[:, columns]
    judged = int((sub != MISSING).sum())
    if judged == 0:
        raise UndefinedMetricError("no judgements on disclosed items")
    return int((sub == SPONSORED).sum()) / judged


def sponsored_proportion(matrix: LabelMatrix, pooled: bool = False) -> float:
    """Share of labels that are Sponsored.

    Default is the mean over annotators of each annotator's Sponsored rate
    (annotators with no labels are excluded); ``pooled=True`` instead divides
    total Sponsored judgements by total judgements.
    """
    rated = matrix.cells != MISSING
    if not rated.any():
        raise UndefinedMetricError("matrix has no labels")
    sponsored = (matrix.cells == SPONSORED).sum(axis=1).astype(float)
    totals = rated.sum(axis=1).astype(float)
    if pooled:
        return float(sponsored.sum() / totals.sum())
    active = totals > 0
    return float((sponsored[active] / totals[active]).mean())


@dataclass
class PairStat:
    a: str
    b: str
    abs_pct: float
    alpha_pct: float


@dataclass
class PairwiseStats:
    pairs: list[PairStat]
    skipped: list[tuple[str, str]]
    min_abs: float
    max_abs: float
    std_abs: float
    min_alpha: float
    max_alpha: float
    std_alpha: float


def _sample_std(values: list[float]) -> float:
    # sample (n-1) form; a single value has no spread, define 0
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1))


def pairwise_agreement(matrix: LabelMatrix) -> PairwiseStats:
    """Absolute agreement and alpha for every unordered annotator pair.

    Each pair is evaluated on the items both rated; pairs sharing no item are
    skipped and reported. Summary spread uses the sample standard deviation.
    """
    if len(matrix.annotators) < 2:
        raise UndefinedMetricError("pairwise agreement needs at least 2 annotators")
    pairs: list[PairStat] = []
    skipped: list[tuple[str, str]] = []
    for i, a in enumerate(matrix.annotators):
        for b in matrix.annotators[i + 1:]:
            view = matrix.pair_view(a, b)
            if not view.items:
                skipped.append((a, b))
                continue
            pairs.append(PairStat(
                a=a,
                b=b,
                abs_pct=absolute_agreement(view) * 100.0,
                alpha_pct=krippendorff_alpha(view) * 100.0,
            ))
    if not pairs:
        raise UndefinedMetricError("no annotator pair shares a rated item")
    abs_values = [p.abs_pct for p in pairs]
    alpha_values = [p.alpha_pct for p in pairs]
    return PairwiseStats(
        pairs=pairs,
        skipped=skipped,
        min_abs=min(abs_values),
        max_abs=max(abs_values),
        std_abs=_sample_std(abs_values),
        min_alpha=min(alpha_values),
        max_alpha=max(alpha_values),
        std_alpha=_sample_std(alpha_values),
    )


@dataclass
class BiasReport:
    sponsored_pct: float
    model_majority_agreement_pct: float
    tie_items_excluded: int


def majority_labels(matrix: LabelMatrix) -> dict[str, int]:
    """Strict-majority label code per item; items without one are omitted."""
    majorities: dict[str, int] = {}
    for u, item in enumerate(matrix.items):
        column = matrix.cells[:, u]
        ratings = column[column != MISSING]
        if ratings.size == 0:
            continue
        counts = np.bincount(ratings)
        top = counts.max()
        if (counts == top).sum() == 1:
            majorities[item] = int(counts.argmax())
    return majorities


def model_agreement_majority(matrix: LabelMatrix, preds: Mapping[str, str]) -> BiasReport:
    """Agreement between the per-item strict annotator majority and model labels.

    Items with tied (or absent) majorities are excluded from the denominator
    and counted in ``tie_items_excluded``.
    """
    missing = [item for item in matrix.items if item not in preds]
    if missing:
        raise NotFoundError(f"predictions missing for items: {missing[:5]}")
    majorities = majority_labels(matrix)
    if not majorities:
        raise UndefinedMetricError("every item is tied; majority agreement undefined")
    agreeing = sum(
        1 for item, code in majorities.items()
        if LABEL_CODES.get(preds[item]) == code
    )
    return BiasReport(
        sponsored_pct=sponsored_proportion(matrix) * 100.0,
        model_majority_agreement_pct=agreeing / len(majorities) * 100.0,
        tie_items_excluded=len(matrix.items) - len(majorities),
    )


def relative_diff(base: float, new: float) -> float:
    """Proportional change from base to new, in percent."""
    if base == 0:
        raise UndefinedMetricError("relative difference undefined for base 0")
    return (new - base) / base * 100.0


@dataclass
class AgreementReport:
    """One row of the group agreement table, all values in percent."""

    group_id: str
    n_annotators: int
    alpha_pct: float | None
    absolute_pct: float | None
    one_disag_pct: float | None
    disclosed_acc_pct: float | None
    sponsored_pct: float


@dataclass
class GroupReport:
    agreement: AgreementReport
    pairwise: PairwiseStats | None
    bias: BiasReport | None


@dataclass
class RelativeDiffRow:
    base_group: str
    new_group: str
    diffs: dict[str, float | None]


@dataclass
class ReportBundle:
    groups: dict[str, GroupReport] = field(default_factory=dict)
    diffs: list[RelativeDiffRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        def pairwise_dict(p: PairwiseStats | None):
            if p is None:
                return None
            return {
                "pairs": [vars(s) for s in p.pairs],
                "skipped": [list(s) for s in p.skipped],
                "summary": {
                    "min_abs": p.min_abs, "max_abs": p.max_abs, "std_abs": p.std_abs,
                    "min_alpha": p.min_alpha, "max_alpha": p.max_alpha,
                    "std_alpha": p.std_alpha,
                },
            }

        return {
            "groups": {
                gid: {
                    "agreement": vars(g.agreement),
                    "pairwise": pairwise_dict(g.pairwise),
                    "bias": vars(g.bias) if g.bias else None,
                }
                for gid, g in self.groups.items()
            },
            "relative_diffs": [
                {"base": d.base_group, "new": d.new_group, "diffs": d.diffs}
                for d in self.diffs
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


_DIFF_METRICS = ("alpha_pct", "absolute_pct", "one_disag_pct", "disclosed_acc_pct", "sponsored_pct")


def _group_agreement(matrix: LabelMatrix, disclosed: set[str], group_id: str) -> AgreementReport:
    n = len(matrix.annotators)
    alpha_pct = absolute_pct = one_disag_pct = None
    if n >= 2:
        try:
            alpha_pct = krippendorff_alpha(matrix) * 100.0
            absolute_pct = absolute_agreement(matrix) * 100.0
            one_disag_pct = at_most_one_disagreement(matrix) * 100.0
        except UndefinedMetricError:
            pass
    disclosed_acc_pct = None
    if disclosed:
        try:
            disclosed_acc_pct = disclosed_accuracy(matrix, disclosed) * 100.0
        except UndefinedMetricError:
            pass
    return AgreementReport(
        group_id=group_id,
        n_annotators=n,
        alpha_pct=alpha_pct,
        absolute_pct=absolute_pct,
        one_disag_pct=one_disag_pct,
        disclosed_acc_pct=disclosed_acc_pct,
        sponsored_pct=sponsored_proportion(matrix) * 100.0,
    )


def build_report(
    matrix: LabelMatrix,
    disclosed_ids: Iterable[str],
    subgroups: Mapping[str, Sequence[str]],
    preds: Mapping[str, str] | None = None,
    pairs: Sequence[tuple[str, str]] | None = None,
) -> ReportBundle:
    """Assemble the full metric bundle over annotator subgroups.

    Each subgroup gets an agreement row on the row-restricted matrix plus
    pairwise statistics and, when predictions are given, the model-bias probe.
    ``pairs`` names (base, new) group pairs for relative-difference rows; when
    omitted and exactly two groups exist they are paired in listed order.
    Groups with fewer than two annotators get explicit None markers for the
    agreement metrics that need a second rater.
    """
    disclosed = set(disclosed_ids)
    known = set(matrix.annotators)
    for gid, members in subgroups.items():
        extra = set(members) - known
        if extra:
            raise NotFoundError(f"subgroup {gid!r} names unknown annotators: {sorted(extra)}")

    bundle = ReportBundle()
    for gid, members in subgroups.items():
        sub = matrix.restrict(list(members))
        pairwise = None
        if len(members) >= 2:
            try:
                pairwise = pairwise_agreement(sub)
            except UndefinedMetricError:
                pairwise = None
        bias = None
        if preds is not None:
            try:
                bias = model_agreement_majority(sub, preds)
            except UndefinedMetricError:
                bias = None
        bundle.groups[gid] = GroupReport(
            agreement=_group_agreement(sub, disclosed, gid),
            pairwise=pairwise,
            bias=bias,
        )

    if pairs is None:
        names = list(subgroups.keys())
        pairs = [(names[0], names[1])] if len(names) == 2 else []
    for base_id, new_id in pairs:
        if base_id not in bundle.groups or new_id not in bundle.groups:
            raise NotFoundError(f"relative-diff pair ({base_id}, {new_id}) names unknown group")
        base = bundle.groups[base_id].agreement
        new = bundle.groups[new_id].agreement
        diffs: dict[str, float | None] = {}
        for metric in _DIFF_METRICS:
            b, n = getattr(base, metric), getattr(new, metric)
            if b is None or n is None or b == 0:
                diffs[metric] = None
            else:
                diffs[metric] = relative_diff(b, n)
        if bundle.groups[base_id].bias and bundle.groups[new_id].bias:
            b = bundle.groups[base_id].bias.model_majority_agreement_pct
            n = bundle.groups[new_id].bias.model_majority_agreement_pct
            diffs["model_majority_agreement_pct"] = relative_diff(b, n) if b != 0 else None
        bundle.diffs.append(RelativeDiffRow(base_group=base_id, new_group=new_id, diffs=diffs))
    return bundle


def _cell(value: float | None, width: int = 8) -> str:
    return f"{value:>{width}.2f}" if value is not None else f"{'-':>{width}}"


def render_text(bundle: ReportBundle) -> str:
    """Aligned-table view of a report bundle (group, pairwise, bias tables)."""
    lines: list[str] = []
    name_w = max([len(g) for g in bundle.groups] + [len("relative diff"), 5]) + 2

    lines.append("Group agreement")
    header = f"{'group':<{name_w}}{'alpha':>8}{'abs':>8}{'1-disag':>9}{'acc':>8}{'spons':>8}{'#':>4}"
    lines.append(header)
    lines.append("-" * len(header))
    for gid, group in bundle.groups.items():
        a = group.agreement
        lines.append(
            f"{gid:<{name_w}}{_cell(a.alpha_pct)}{_cell(a.absolute_pct)}"
            f"{_cell(a.one_disag_pct, 9)}{_cell(a.disclosed_acc_pct)}"
            f"{_cell(a.sponsored_pct)}{a.n_annotators:>4}"
        )
    for row in bundle.diffs:
        d = row.diffs
        lines.append(
            f"{'relative diff':<{name_w}}{_cell(d.get('alpha_pct'))}{_cell(d.get('absolute_pct'))}"
            f"{_cell(d.get('one_disag_pct'), 9)}{_cell(d.get('disclosed_acc_pct'))}"
            f"{_cell(d.get('sponsored_pct'))}{'':>4}  ({row.base_group} -> {row.new_group})"
        )

    if any(g.pairwise for g in bundle.groups.values()):
        lines.append("")
        lines.append("Pairwise agreement")
        header = (
            f"{'group':<{name_w}}{'min abs':>9}{'max abs':>9}{'std':>8}"
            f"{'min a':>9}{'max a':>9}{'std':>8}"
        )
        lines.append(header)
        lines.append("-" * len(header))
        for gid, group in bundle.groups.items():
            p = group.pairwise
            if p is None:
                continue
            lines.append(
                f"{gid:<{name_w}}{_cell(p.min_abs, 9)}{_cell(p.max_abs, 9)}{_cell(p.std_abs)}"
                f"{_cell(p.min_alpha, 9)}{_cell(p.max_alpha, 9)}{_cell(p.std_alpha)}"
            )

    if any(g.bias for g in bundle.groups.values()):
        lines.append("")
        lines.append("Model agreement (strict annotator majority vs model label)")
        header = f"{'group':<{name_w}}{'spons':>8}{'agree':>8}{'ties':>6}"
        lines.append(header)
        lines.append("-" * len(header))
        for gid, group in bundle.groups.items():
            b = group.bias
            if b is None:
                continue
            lines.append(
                f"{gid:<{name_w}}{_cell(b.sponsored_pct)}"
                f"{_cell(b.model_majority_agreement_pct)}{b.tie_items_excluded:>6}"
            )
    return "\n".join(lines) + "\n"
