"""Regenerate the bundled desk-scale benchmark suite.

Writes CSV data files, ground-truth PNGs, and suite.jsonl into
src/vispath/suites/desk/. Run from the repository root:

    python tools/gen_desk_suite.py

Deterministic: fixed RNG seed, fixed figure sizes, fixed DPI.
"""

from __future__ import annotations

import csv
import json
import math
import random
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

ROOT = Path(__file__).resolve().parents[1]
DESK = ROOT / "src" / "vispath" / "suites" / "desk"
DATA = DESK / "data"
GT = DESK / "gt"

rng = random.Random(20240211)


def write_csv(name: str, header: list[str], rows: list[list]) -> str:
    DATA.mkdir(parents=True, exist_ok=True)
    path = DATA / name
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return f"data/{name}"


def save_gt(name: str, fig) -> str:
    GT.mkdir(parents=True, exist_ok=True)
    path = GT / name
    fig.savefig(path, dpi=80, bbox_inches="tight")
    plt.close(fig)
    return f"gt/{name}"


def main() -> None:
    items = []

    # 1. monthly sales line chart
    months = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"]
    sales = [round(120 + 40 * math.sin(i / 2) + rng.uniform(-8, 8), 1) for i in range(12)]
    csv_rel = write_csv("monthly_sales.csv", ["month", "sales"], list(map(list, zip(months, sales))))
    fig, ax = plt.subplots(figsize=(4, 2.6))
    ax.plot(months, sales, marker="o")
    ax.set_xlabel("month"); ax.set_ylabel("sales (k$)"); ax.set_title("Monthly sales")
    ax.tick_params(axis="x", rotation=45)
    items.append({
        "id": "desk-01-sales-trend",
        "query": "Show how sales changed over the year.",
        "dataset_description": "monthly_sales.csv: columns month (Jan..Dec, text) and sales (thousand dollars, float), one row per month.",
        "data_files": [{"name": "monthly_sales.csv", "path": csv_rel}],
        "gt_image": save_gt("sales_trend.png", fig),
    })

    # 2. two-group scatter
    pts = [(rng.gauss(-2, 0.8), rng.gauss(-2, 0.8), "X") for _ in range(60)]
    pts += [(rng.gauss(2, 0.8), rng.gauss(2, 0.8), "Y") for _ in range(60)]
    csv_rel = write_csv("groups.csv", ["x", "y", "group"],
                        [[round(a, 3), round(b, 3), g] for a, b, g in pts])
    fig, ax = plt.subplots(figsize=(3.6, 3.2))
    for g, color in (("X", "tab:blue"), ("Y", "tab:orange")):
        xs = [a for a, _, gg in pts if gg == g]
        ys = [b for _, b, gg in pts if gg == g]
        ax.scatter(xs, ys, s=12, color=color, label=f"Group {g}")
    ax.legend(); ax.set_xlabel("x"); ax.set_ylabel("y"); ax.set_title("Two groups")
    items.append({
        "id": "desk-02-group-scatter",
        "query": "Plot the two point groups so they are visually distinct, blue for X and orange for Y.",
        "dataset_description": "groups.csv: columns x (float), y (float), group (X or Y), 120 rows.",
        "data_files": [{"name": "groups.csv", "path": csv_rel}],
        "gt_image": save_gt("group_scatter.png", fig),
    })

    # 3. category bar chart
    cats = [("electronics", 342), ("clothing", 251), ("grocery", 487), ("toys", 133), ("books", 96)]
    csv_rel = write_csv("category_counts.csv", ["category", "orders"], list(map(list, cats)))
    fig, ax = plt.subplots(figsize=(4, 2.6))
    ax.bar([c for c, _ in cats], [n for _, n in cats], color="#4477aa")
    ax.set_ylabel("orders"); ax.set_title("Orders per category")
    ax.tick_params(axis="x", rotation=30)
    items.append({
        "id": "desk-03-category-bars",
        "query": "Compare order volume across product categories.",
        "dataset_description": "category_counts.csv: columns category (text) and orders (int), 5 rows.",
        "data_files": [{"name": "category_counts.csv", "path": csv_rel}],
        "gt_image": save_gt("category_bars.png", fig),
    })

    # 4. histogram of response times
    delays = [round(max(0.05, rng.gauss(1.4, 0.5)), 3) for _ in range(300)]
    csv_rel = write_csv("latency.csv", ["response_s"], [[d] for d in delays])
    fig, ax = plt.subplots(figsize=(4, 2.6))
    ax.hist(delays, bins=25, color="#66aa55", edgecolor="white")
    ax.set_xlabel("response time (s)"); ax.set_ylabel("count"); ax.set_title("Latency distribution")
    items.append({
        "id": "desk-04-latency-hist",
        "query": "What does the distribution of response times look like?",
        "dataset_description": "latency.csv: single column response_s (seconds, float), 300 rows.",
        "data_files": [{"name": "latency.csv", "path": csv_rel}],
        "gt_image": save_gt("latency_hist.png", fig),
    })

    # 5. market share pie
    share = [("North", 38), ("South", 27), ("East", 21), ("West", 14)]
    csv_rel = write_csv("market_share.csv", ["region", "share_pct"], list(map(list, share)))
    fig, ax = plt.subplots(figsize=(3.2, 3.2))
    ax.pie([s for _, s in share], labels=[r for r, _ in share], autopct="%1.0f%%")
    ax.set_title("Market share by region")
    items.append({
        "id": "desk-05-share-pie",
        "query": "Show each region's share of the market.",
        "dataset_description": "market_share.csv: columns region (text) and share_pct (percent, int summing to 100), 4 rows.",
        "data_files": [{"name": "market_share.csv", "path": csv_rel}],
        "gt_image": save_gt("share_pie.png", fig),
    })

    # 6. box plot of scores per class
    rows = []
    for klass, mu in (("A", 72), ("B", 64), ("C", 80)):
        for _ in range(40):
            rows.append([klass, round(min(100, max(0, rng.gauss(mu, 9))), 1)])
    csv_rel = write_csv("class_scores.csv", ["class", "score"], rows)
    fig, ax = plt.subplots(figsize=(3.6, 2.8))
    data = {k: [s for kk, s in rows if kk == k] for k in ("A", "B", "C")}
    ax.boxplot(data.values(), tick_labels=list(data.keys()))
    ax.set_xlabel("class"); ax.set_ylabel("score"); ax.set_title("Scores by class")
    items.append({
        "id": "desk-06-score-box",
        "query": "Compare the spread of scores between the three classes.",
        "dataset_description": "class_scores.csv: columns class (A, B, or C) and score (0-100, float), 120 rows.",
        "data_files": [{"name": "class_scores.csv", "path": csv_rel}],
        "gt_image": save_gt("score_box.png", fig),
    })

    # 7. correlation heatmap
    names = ["temp", "humidity", "wind", "rain"]
    matrix = [
        [1.0, -0.62, 0.18, -0.45],
        [-0.62, 1.0, -0.05, 0.71],
        [0.18, -0.05, 1.0, 0.12],
        [-0.45, 0.71, 0.12, 1.0],
    ]
    csv_rel = write_csv("weather_corr.csv", ["var", *names],
                        [[names[i], *matrix[i]] for i in range(4)])
    fig, ax = plt.subplots(figsize=(3.4, 3))
    im = ax.imshow(matrix, vmin=-1, vmax=1, cmap="coolwarm")
    ax.set_xticks(range(4), names, rotation=45)
    ax.set_yticks(range(4), names)
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title("Weather correlations")
    items.append({
        "id": "desk-07-corr-heatmap",
        "query": "Visualize the correlation matrix of the weather variables.",
        "dataset_description": "weather_corr.csv: first column var names a variable; remaining columns temp, humidity, wind, rain hold its correlations (floats in [-1, 1]). 4 rows.",
        "data_files": [{"name": "weather_corr.csv", "path": csv_rel}],
        "gt_image": save_gt("corr_heatmap.png", fig),
    })

    # 8. stacked area of traffic sources
    weeks = list(range(1, 13))
    organic = [round(30 + 2.2 * w + rng.uniform(-3, 3), 1) for w in weeks]
    paid = [round(22 + 0.8 * w + rng.uniform(-2, 2), 1) for w in weeks]
    referral = [round(11 + 0.4 * w + rng.uniform(-2, 2), 1) for w in weeks]
    csv_rel = write_csv("traffic.csv", ["week", "organic", "paid", "referral"],
                        list(map(list, zip(weeks, organic, paid, referral))))
    fig, ax = plt.subplots(figsize=(4, 2.6))
    ax.stackplot(weeks, organic, paid, referral, labels=["organic", "paid", "referral"])
    ax.legend(loc="upper left"); ax.set_xlabel("week"); ax.set_ylabel("visits (k)")
    ax.set_title("Traffic sources")
    items.append({
        "id": "desk-08-traffic-area",
        "query": "Show how the mix of traffic sources evolved week by week.",
        "dataset_description": "traffic.csv: columns week (1-12, int), organic, paid, referral (thousand visits, float).",
        "data_files": [{"name": "traffic.csv", "path": csv_rel}],
        "gt_image": save_gt("traffic_area.png", fig),
    })

    # 9. polar bar chart of wind directions
    dirs = ["N", "NE", "E", "SE", "S", "SW", "W", "NW"]
    counts = [18, 9, 6, 11, 23, 30, 17, 12]
    csv_rel = write_csv("wind_rose.csv", ["direction", "hours"], list(map(list, zip(dirs, counts))))
    fig = plt.figure(figsize=(3.4, 3.4))
    ax = fig.add_subplot(projection="polar")
    theta = [i * 2 * math.pi / 8 for i in range(8)]
    ax.bar(theta, counts, width=2 * math.pi / 8 * 0.9, bottom=0.0, alpha=0.8)
    ax.set_xticks(theta, dirs)
    ax.set_title("Wind direction hours")
    items.append({
        "id": "desk-09-wind-rose",
        "query": "Plot the wind direction data as a wind rose.",
        "dataset_description": "wind_rose.csv: columns direction (8 compass points) and hours (int).",
        "data_files": [{"name": "wind_rose.csv", "path": csv_rel}],
        "gt_image": save_gt("wind_rose.png", fig),
    })

    # 10. many time series, no ground truth (executable-rate-only item)
    rows = []
    for series in range(20):
        level = rng.uniform(5, 20)
        for t in range(50):
            level += rng.uniform(-1, 1.1)
            rows.append([series, t, round(level, 2)])
    csv_rel = write_csv("many_series.csv", ["series_id", "t", "value"], rows)
    items.append({
        "id": "desk-10-many-series",
        "query": "Visualize a large number of time series in three different ways.",
        "dataset_description": "many_series.csv: columns series_id (0-19, int), t (0-49, int), value (float); 1000 rows, 20 series of 50 points.",
        "data_files": [{"name": "many_series.csv", "path": csv_rel}],
        "gt_image": None,
    })

    DESK.mkdir(parents=True, exist_ok=True)
    with (DESK / "suite.jsonl").open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item, ensure_ascii=False) + "\n")
    print(f"wrote {len(items)} items under {DESK}")


if __name__ == "__main__":
    main()
