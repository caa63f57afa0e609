"""Self-contained SVG emitters for the three report figures: cosine
histograms, negative-fraction trajectories, and reinitialization heatmaps.

No plotting backend; each function returns a complete SVG document as a
string with fixed canvas size and two-decimal coordinates, so identical
inputs yield identical bytes.
"""

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 20, 36, 44

_PALETTE = (
    "#1f6f8b", "#d1495b", "#66a182", "#edae49", "#8d5a97",
    "#00798c", "#b07156", "#3d5a80", "#778a35", "#9b2d30",
    "#5f6caf", "#2e4057",
)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _doc(body: list, title: str) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _axes(x_label: str, y_label: str) -> list:
    x0, y0 = MARGIN_L, HEIGHT - MARGIN_B
    x1, y1 = WIDTH - MARGIN_R, MARGIN_T
    return [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) // 2}" y="{HEIGHT - 8}" text-anchor="middle">{x_label}</text>',
        f'<text x="14" y="{(y0 + y1) // 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(y0 + y1) // 2})">{y_label}</text>',
    ]


def _x_of(v, lo, hi):
    span = WIDTH - MARGIN_L - MARGIN_R
    return MARGIN_L + (v - lo) / (hi - lo) * span


def _y_of(v, lo, hi):
    span = HEIGHT - MARGIN_T - MARGIN_B
    return HEIGHT - MARGIN_B - (v - lo) / (hi - lo) * span


def histogram_svg(hist, title: str = "filter cosine histogram") -> str:
    edges = list(hist.edges)
    counts = list(int(c) for c in hist.counts)
    top = max(max(counts), 1)
    body = _axes("cosine", "count")
    for i, count in enumerate(counts):
        x_left = _x_of(edges[i], edges[0], edges[-1])
        x_right = _x_of(edges[i + 1], edges[0], edges[-1])
        y = _y_of(count, 0, top)
        h = (HEIGHT - MARGIN_B) - y
        body.append(
            f'<rect x="{_fmt(x_left)}" y="{_fmt(y)}" width="{_fmt(x_right - x_left)}" '
            f'height="{_fmt(h)}" fill="{_PALETTE[0]}" stroke="white" stroke-width="0.5"/>'
        )
    zero_x = _x_of(0.0, edges[0], edges[-1])
    body.append(
        f'<line x1="{_fmt(zero_x)}" y1="{MARGIN_T}" x2="{_fmt(zero_x)}" '
        f'y2="{HEIGHT - MARGIN_B}" stroke="black" stroke-dasharray="4 3"/>'
    )
    for v in (edges[0], 0.0, edges[-1]):
        body.append(
            f'<text x="{_fmt(_x_of(v, edges[0], edges[-1]))}" y="{HEIGHT - MARGIN_B + 16}" '
            f'text-anchor="middle">{v:g}</text>'
        )
    body.append(f'<text x="{MARGIN_L - 8}" y="{HEIGHT - MARGIN_B + 4}" text-anchor="end">0</text>')
    body.append(f'<text x="{MARGIN_L - 8}" y="{MARGIN_T + 4}" text-anchor="end">{top}</text>')
    return _doc(body, title)


def trajectories_svg(trajectories: dict, title: str = "negative fraction by epoch") -> str:
    """trajectories: {layer_id: BiasTrajectory}."""
    layer_ids = sorted(trajectories)
    all_epochs = sorted({e for lid in layer_ids for e in trajectories[lid].epochs})
    e_lo, e_hi = all_epochs[0], max(all_epochs[-1], all_epochs[0] + 1)
    body = _axes("epoch", "negative fraction")
    half_y = _y_of(0.5, 0.0, 1.0)
    body.append(
        f'<line x1="{MARGIN_L}" y1="{_fmt(half_y)}" x2="{WIDTH - MARGIN_R}" '
        f'y2="{_fmt(half_y)}" stroke="#999999" stroke-dasharray="4 3"/>'
    )
    for idx, lid in enumerate(layer_ids):
        traj = trajectories[lid]
        color = _PALETTE[idx % len(_PALETTE)]
        points = " ".join(
            f"{_fmt(_x_of(e, e_lo, e_hi))},{_fmt(_y_of(v, 0.0, 1.0))}"
            for e, v in zip(traj.epochs, traj.values)
        )
        body.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = MARGIN_T + 14 * idx
        body.append(f'<line x1="{WIDTH - 150}" y1="{ly}" x2="{WIDTH - 130}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        body.append(f'<text x="{WIDTH - 124}" y="{ly + 4}">layer {lid}</text>')
    for v in (0.0, 0.5, 1.0):
        body.append(f'<text x="{MARGIN_L - 8}" y="{_fmt(_y_of(v, 0.0, 1.0) + 4)}" text-anchor="end">{v:g}</text>')
    for e in (e_lo, e_hi):
        body.append(f'<text x="{_fmt(_x_of(e, e_lo, e_hi))}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle">{e}</text>')
    return _doc(body, title)


def _heat_color(t: float) -> str:
    """0 -> near white, 1 -> deep red."""
    t = min(max(t, 0.0), 1.0)
    r = 255 - int(round(43 * t))
    g = int(round(245 * (1.0 - t)))
    b = int(round(240 * (1.0 - t)))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(grid, title: str = "reinitialization accuracy drop") -> str:
    rows, cols = len(grid.epochs), len(grid.layer_ids)
    x0, y0 = MARGIN_L, MARGIN_T
    cell_w = (WIDTH - MARGIN_L - MARGIN_R - 60) / cols
    cell_h = (HEIGHT - MARGIN_T - MARGIN_B) / rows
    peak = max(float(grid.drops.max()), 1e-9)
    body = []
    for i, epoch in enumerate(grid.epochs):
        for j, lid in enumerate(grid.layer_ids):
            drop = float(grid.drops[i, j])
            x = x0 + j * cell_w
            y = y0 + i * cell_h
            body.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(cell_w)}" height="{_fmt(cell_h)}" '
                f'fill="{_heat_color(drop / peak)}" stroke="#cccccc" stroke-width="0.5"/>'
            )
            body.append(
                f'<text x="{_fmt(x + cell_w / 2)}" y="{_fmt(y + cell_h / 2 + 4)}" '
                f'text-anchor="middle" font-size="10">{drop:.3f}</text>'
            )
        body.append(
            f'<text x="{x0 - 8}" y="{_fmt(y0 + i * cell_h + cell_h / 2 + 4)}" text-anchor="end">{epoch}</text>'
        )
    for j, lid in enumerate(grid.layer_ids):
        body.append(
            f'<text x="{_fmt(x0 + j * cell_w + cell_w / 2)}" y="{y0 - 8}" text-anchor="middle">L{lid}</text>'
        )
    body.append(
        f'<text x="{x0 - 44}" y="{(y0 + HEIGHT - MARGIN_B) // 2}" text-anchor="middle" '
        f'transform="rotate(-90 {x0 - 44} {(y0 + HEIGHT - MARGIN_B) // 2})">reinit epoch</text>'
    )
    return _doc(body, title)
