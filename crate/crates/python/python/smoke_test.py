"""Smoke test for the nearfield extension module.

Run after `pip install --no-build-isolation crates/python`.
"""

import math

import nearfield


def main():
    arr = nearfield.Array()
    assert arr.elements == 64
    assert abs(arr.rayleigh_distance - 21.25) < 0.05, arr.rayleigh_distance
    assert abs(arr.ebrd(30.0) - 1.60) < 0.02
    a = arr.steering(40.0, 5.0)
    assert len(a) == 64 and all(abs(abs(z) - 1.0) < 1e-12 for z in a)
    b = arr.steering(40.0, 5.0, model="fresnel")
    corr = abs(sum(x.conjugate() * y for x, y in zip(a, b))) / 64
    assert 0.5 < corr <= 1.0 + 1e-12

    sc = nearfield.Scenario(snr_db=10)
    assert sc.snr_db == 10 and sc.paths == 3 and sc.rf_chains == 8
    scene = sc.draw(42)
    assert len(scene.paths) == 3
    cov = scene.sample_cov
    assert len(cov) == 8 and all(len(r) == 8 for r in cov)
    assert all(abs(cov[i][j] - cov[j][i].conjugate()) < 1e-9 for i in range(8) for j in range(8))

    for name in ("clkl", "psomp"):
        est = getattr(scene, name)()
        assert len(est.paths) == 3
        assert math.isfinite(est.nmse_db)
        assert est.noise_estimate > 0
        print(f"{name:6s} {est!r} truth={[(round(t, 1), round(r, 2)) for t, r, _ in scene.paths]}"
              f" est={[(round(t, 1), round(r, 2)) for t, r, _ in est.paths]}")
    est = scene.clkl()
    assert est.winning_start in (0, 1, 2)
    assert all(all(t1 <= t0 + 1e-12 * abs(t0) for t0, t1 in zip(tr, tr[1:])) for tr in est.traces)

    crb = sc.crb(trials=10, seed=42)
    assert crb["valid_trials"] > 0 and crb["theta_deg"] > 0
    assert nearfield.max_identifiable_paths(8) == 3

    rows = nearfield.sweep("mc = 4\nworkers = 1\nvalues = 0, 10")
    assert {(r["value"], r["method"]) for r in rows} == {
        ("0", "clkl"), ("0", "psomp"), ("10", "clkl"), ("10", "psomp")}

    try:
        nearfield.Scenario(bogus=1)
    except ValueError as e:
        assert "bogus" in str(e)
    else:
        raise AssertionError("unknown key accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
