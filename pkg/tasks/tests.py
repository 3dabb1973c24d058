from tasks import (
    Ctx,
    doc,
    header,
    task,
)


@task(
    help={
        "parallel": "Spread tests over all cores (pytest-xdist)",
        "slow": "Include the Monte Carlo acceptance checks",
        "cov": "Report coverage of src/xroffload",
    }
)
def run(c: Ctx, parallel: bool = False, slow: bool = False, cov: bool = False):
    """Run tests"""
    header(doc())
    cmd = "pytest -v"
    if not slow:
        cmd += " -m 'not slow'"
    if parallel:
        cmd += " -n auto"
    if cov:
        cmd += " --cov=xroffload --cov-report=term-missing"
    c.run(cmd, echo=True, pty=True)
