"""Joined observation rows and the predictor sets fitted on them."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from ..ingest import LoanRecord
from .ols import CooksVector, OlsFit, ols_fit

LOAN_COLUMNS = ["amt", "int", "def"]
GRAPH_COLUMNS = ["out", "ins", "triad", "eigen", "far", "dur"]
DEFAULT_MODEL_COLUMNS = ["out", "ins", "triad", "dur", "amt", "int", "eigen", "far"]

_METRIC_RENAME = {"out_edges": "out", "in_edges": "ins", "triads": "triad",
                  "eigen": "eigen", "farness": "far", "dur": "dur"}


def synthetic_profit(loan: LoanRecord) -> float:
    """Annual interest earned on a performing loan; nothing on a default."""
    if loan.default:
        return 0.0
    return loan.amount * loan.interest


def location_columns(vocabulary: Sequence[str]) -> list[str]:
    return ["diff_day"] + list(vocabulary)


def default_specs(vocabulary: Sequence[str]) -> dict[str, list[str]]:
    """The six nested predictor groupings, naive first."""
    loc = location_columns(vocabulary)
    return {
        "naive": [],
        "graph": list(GRAPH_COLUMNS),
        "location": loc,
        "graph+location": GRAPH_COLUMNS + loc,
        "baseline": list(LOAN_COLUMNS),
        "all": LOAN_COLUMNS + GRAPH_COLUMNS + loc,
    }


def loans_frame(loans: Iterable[LoanRecord]) -> pd.DataFrame:
    rows = [{"borrower_id": ln.borrower_id, "profit": synthetic_profit(ln),
             "amt": ln.amount, "int": ln.interest, "def": int(ln.default)} for ln in loans]
    return pd.DataFrame(rows, columns=["borrower_id", "profit", "amt", "int", "def"])


def join_observations(loans: Iterable[LoanRecord], metrics: pd.DataFrame,
                      locfeat: pd.DataFrame, per_borrower: bool = False) -> pd.DataFrame:
    """Loan x graph metrics x location rows, one per ping by default.

    With ``per_borrower`` the location columns are averaged per borrower
    first, giving one row per loan.
    """
    lf = loans_frame(loans)
    gm = metrics.rename(columns=_METRIC_RENAME)
    loc = locfeat
    if per_borrower:
        num = loc.drop(columns=[c for c in ("timestamp",) if c in loc.columns])
        loc = num.groupby("borrower_id", sort=True).mean().reset_index()
    rows = lf.merge(gm, on="borrower_id", how="inner", validate="one_to_one")
    rows = rows.merge(loc, on="borrower_id", how="inner", validate="one_to_many")
    sort_cols = ["borrower_id"] + (["timestamp"] if "timestamp" in rows.columns else [])
    rows = rows.sort_values(sort_cols, kind="stable").reset_index(drop=True)
    if (rows.loc[rows["def"] == 1, "profit"] != 0).any():
        raise AssertionError("defaulted loan with nonzero profit")
    if (rows["profit"] < 0).any():
        raise AssertionError("negative profit")
    return rows


def fit_default_model(rows: pd.DataFrame) -> OlsFit:
    """Linear probability model of default on graph and loan covariates."""
    if "def" not in rows.columns or rows["def"].isna().any():
        raise ValueError("default flag missing on some rows")
    return ols_fit(rows[DEFAULT_MODEL_COLUMNS], rows["def"].to_numpy(dtype=float))


def influence_by_predictor(rows: pd.DataFrame, cooks: CooksVector,
                           predictors: Sequence[str], top: int = 40) -> pd.DataFrame:
    """Rank predictors by the Cook's distance of the rows that exercise them.

    For a count predictor the exercised rows are those with a nonzero
    value; for predictors that are never zero they are the rows above the
    median. ``estimate`` is the mean distance of those rows and ``p`` a
    one-sided Welch test that it exceeds the mean of the remaining rows.
    """
    d = cooks.distance
    finite = np.isfinite(d)
    out = []
    for name in predictors:
        x = rows[name].to_numpy(dtype=float)
        hit = x != 0
        if hit.all():
            hit = x > np.median(x)
        a, b = d[hit & finite], d[~hit & finite]
        if len(a) < 2 or len(b) < 2:
            continue
        t = stats.ttest_ind(a, b, equal_var=False, alternative="greater")
        out.append({"predictor": name, "estimate": float(a.mean()), "p": float(t.pvalue),
                    "n_rows": int(hit.sum())})
    tab = pd.DataFrame(out, columns=["predictor", "estimate", "p", "n_rows"])
    tab = tab.sort_values(["estimate", "predictor"], ascending=[False, True], kind="stable")
    return tab.head(top).reset_index(drop=True)
