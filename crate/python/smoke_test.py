"""Smoke test for the opmean extension module.

Build the module first, for example with `maturin develop -m crates/py/Cargo.toml`,
or copy `target/release/libopmean_py.so` to `opmean.so` somewhere on PYTHONPATH.
"""

import math

import opmean


def close(x, y, tol=1e-12):
    return abs(x - y) <= tol * max(1.0, abs(y))


def main():
    assert close(opmean.heinz(4.0, 1.0, 0.25), 2.1213203435596426)
    assert close(opmean.logmean(math.e, 1.0), 1.7182818284590452)
    assert close(opmean.r_log(4.0), 1.2402265069591007)
    chain = opmean.chain(4.0, 1.0)
    assert chain["gm"] <= chain["gm_rat"] <= chain["gm_log"] <= chain["am"] <= chain["upper"]

    a = opmean.Matrix.diag([4.0, 1.0])
    b = opmean.Matrix.identity(2)
    assert close(opmean.geo_mean(a, b).to_list()[0][0], 2.0)
    bundle = opmean.mean_bundle([[4.0, 0.0], [0.0, 1.0]], b)
    assert close(bundle["mid"].to_list()[0][0], 2.36)
    holds, margin = opmean.loewner_leq(bundle["mid"], bundle["am"])
    assert holds and margin >= -1e-12

    root = opmean.sqrt_pd([[2.0, 1.0], [1.0, 2.0]]).to_list()
    assert close(root[0][0], 1.3660254037844386) and close(root[0][1], 0.36602540378443865)
    values, _ = opmean.jacobi_eig([[2.0, 1.0], [1.0, 2.0]])
    assert close(values[0], 1.0) and close(values[1], 3.0)

    window = opmean.feasibility("self_inverse", 0.5, 2.0, 4.0, strengthened=True)
    assert window == {"status": "feasible", "lo": 2.0, "hi": 4.0}

    assert "thm32_literal" in opmean.list_checks()
    report = opmean.run_campaign(["op_amgm", "nakamoto"], dims=[2, 3], trials=50, seed=1)
    assert report["violations"] == 0

    found = opmean.falsify("thm32_literal", budget=1000, n=2, seed=1)
    assert found["outcome"] == "counterexample"
    again = opmean.replay(found["trace"])
    assert again["margin"] == found["report"]["margin"] and again["violated"]

    try:
        opmean.falsify("thm99")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown check accepted")

    print("opmean smoke test passed")


if __name__ == "__main__":
    main()
