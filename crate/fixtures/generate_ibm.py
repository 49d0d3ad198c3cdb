"""Regenerates the synthetic IBM-like daily fixtures.

The series is not real market data. Log prices follow a Brownian bridge
between yearly anchor levels that roughly track IBM's 2014-2023 range, with
about 1.2% daily volatility. Output uses the provider's daily JSON layout.

    python3 fixtures/generate_ibm.py
"""

import json
import pathlib

import numpy as np
import pandas as pd

SEED = 20240101
ANCHORS = {
    "2014-01-02": 185.0,
    "2015-01-02": 162.0,
    "2016-01-04": 135.0,
    "2017-01-03": 165.0,
    "2018-01-02": 160.0,
    "2019-01-02": 115.0,
    "2020-01-02": 135.0,
    "2020-04-01": 108.0,
    "2021-01-04": 123.0,
    "2022-01-03": 133.0,
    "2023-01-03": 141.0,
    "2023-12-29": 158.0,
}
DAILY_VOL = 0.012


def build() -> pd.DataFrame:
    rng = np.random.default_rng(SEED)
    days = pd.bdate_range("2014-01-02", "2023-12-29")
    anchor_days = [pd.Timestamp(d) for d in ANCHORS]
    anchor_pos = days.get_indexer(anchor_days)
    assert (anchor_pos >= 0).all()
    base = np.interp(np.arange(len(days)), anchor_pos, np.log(list(ANCHORS.values())))

    noise = np.zeros(len(days))
    for a, b in zip(anchor_pos[:-1], anchor_pos[1:]):
        steps = rng.normal(0.0, DAILY_VOL, b - a)
        walk = np.concatenate([[0.0], np.cumsum(steps)])
        t = np.linspace(0.0, 1.0, b - a + 1)
        noise[a : b + 1] = walk - t * walk[-1]
    close = np.exp(base + noise)

    prev = np.concatenate([[close[0]], close[:-1]])
    open_ = prev * np.exp(rng.normal(0.0, 0.004, len(days)))
    high = np.maximum(open_, close) * np.exp(np.abs(rng.normal(0.0, 0.006, len(days))))
    low = np.minimum(open_, close) * np.exp(-np.abs(rng.normal(0.0, 0.006, len(days))))
    volume = rng.integers(2_500_000, 9_000_000, len(days))
    return pd.DataFrame(
        {"open": open_, "high": high, "low": low, "close": close, "volume": volume},
        index=days,
    )


def payload(df: pd.DataFrame, size: str) -> dict:
    rows = {}
    for day, r in df.iloc[::-1].iterrows():
        rows[day.strftime("%Y-%m-%d")] = {
            "1. open": f"{r.open:.4f}",
            "2. high": f"{r.high:.4f}",
            "3. low": f"{r.low:.4f}",
            "4. close": f"{r.close:.4f}",
            "5. volume": str(int(r.volume)),
        }
    return {
        "Meta Data": {
            "1. Information": "Daily Prices (open, high, low, close) and Volumes",
            "2. Symbol": "IBM",
            "3. Last Refreshed": df.index[-1].strftime("%Y-%m-%d"),
            "4. Output Size": size.capitalize() + (" size" if size == "full" else ""),
            "5. Time Zone": "US/Eastern",
        },
        "Time Series (Daily)": rows,
    }


def main() -> None:
    here = pathlib.Path(__file__).parent
    df = build()
    (here / "IBM_full.json").write_text(json.dumps(payload(df, "full"), indent=4) + "\n")
    (here / "IBM_compact.json").write_text(json.dumps(payload(df.iloc[-100:], "compact"), indent=4) + "\n")


if __name__ == "__main__":
    main()
