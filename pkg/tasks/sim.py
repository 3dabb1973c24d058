from tasks import (  # noqa: F401
    FIGURES_DIR,
    WORKERS,
    Ctx,
    doc,
    header,
    info,
    success,
    task,
)


@task(
    help={
        "out": "Output directory, default: $XROFFLOAD_FIGURES_DIR or 'figures'",
        "plots": "Render SVG plots next to the CSVs",
    }
)
def replicate(c: Ctx, out: str = "", plots: bool = True):
    """Regenerate the replication CSVs and figures"""
    header(doc())
    target = out or str(FIGURES_DIR)
    c.run(
        f"xroffload replicate --out {target} --plots {'on' if plots else 'off'}",
        echo=True,
        pty=True,
    )
    success(f"Artifacts written to '{target}'")


@task(help={"config": "Scenario or experiment file, or a bundled name"})
def alpha(c: Ctx, config: str = "replication.scenario"):
    """Solve the local-service probabilities"""
    header(doc())
    c.run(f"xroffload solve-alpha --config {config} --out {FIGURES_DIR}", echo=True, pty=True)


@task(
    help={
        "config": "Scenario or experiment file, or a bundled name",
        "runs": "Ensemble size",
    }
)
def compare(c: Ctx, config: str = "replication.toml", runs: int = 200):
    """Compare TAO against the baselines over a Monte Carlo ensemble"""
    header(doc())
    info(f"{runs} runs on {WORKERS} worker(s)")
    c.run(
        f"xroffload compare --config {config} --runs {runs} --workers {WORKERS} "
        f"--strategy tao,sota,always_offload --out {FIGURES_DIR}",
        echo=True,
        pty=True,
    )
