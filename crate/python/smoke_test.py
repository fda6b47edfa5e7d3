"""Smoke test for the kfactor extension module.

Build and install first, e.g. `maturin develop --release` or
`pip install .` from the repository root.
"""

import math

import kfactor


def main():
    panel = kfactor.simulate_panel("A", seed=7, dist="cauchy", n=40, t=60)
    assert (panel.t, panel.n) == (60, 40)

    k = kfactor.kendall_tau(panel.double_demean())
    assert len(k) == 40
    assert abs(sum(k[i][i] for i in range(40)) - 1.0) < 1e-10
    assert all(abs(k[i][j] - k[j][i]) < 1e-12 for i in range(40) for j in range(i))

    eig = kfactor.eigenvalues(k, top_k=5)
    assert eig == sorted(eig, reverse=True)

    results = kfactor.estimate(panel, methods="mker,mktcr,er")
    by_method = {r.method: r for r in results}
    assert by_method["mker"].r_hat == 3, results
    assert by_method["mktcr"].r_hat == 3, results
    assert len(by_method["mker"].criterion) == 8

    rows = panel.values()
    rows[3][5] = math.nan
    holey = kfactor.Panel(rows)
    assert holey.missing == 1
    assert kfactor.estimate(holey, methods="mker")[0].r_hat == 3

    cells = kfactor.run_scenario("A", reps=10, seed=1, methods="mker,er", dist="t3", n=40, t=40)
    assert [c.label for c in cells] == ["mker", "er"]
    assert cells[0].exact == 10

    labels, series = kfactor.rolling(panel, window=40, methods="mker")
    assert labels == ["mker"]
    assert len(series) == 60 - 40 + 1

    ok, summary = kfactor.selfcheck(seed=2)
    assert ok, summary

    try:
        kfactor.run_scenario("B1", reps=1, seed=1, dist="cauchy")
    except ValueError:
        pass
    else:
        raise AssertionError("distribution override accepted for B1")

    print("kfactor smoke test passed:", results)


if __name__ == "__main__":
    main()
