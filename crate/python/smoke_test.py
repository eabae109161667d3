"""Smoke test of the gridnewton_py extension: solve, harvest, train, evaluate."""

import math
import os
import sys
import tempfile

import gridnewton_py as gn

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CASE30 = os.path.join(ROOT, "crates", "core", "data", "case30.m")


def main() -> int:
    net = gn.Network.from_file(CASE30)
    assert (net.n_bus, net.n_gen, net.n_state) == (30, 6, 72), (net.n_bus, net.n_gen, net.n_state)

    ref = net.solve(tol=1e-9)
    assert ref["status"] == "Converged", ref["status"]
    print(f"reference: {ref['iterations']} iterations, cost {ref['cost']:.4f} $/h")

    pd, qd = net.perturb(7, 0.4)
    assert len(pd) == len(qd) == net.n_load

    with tempfile.TemporaryDirectory() as tmp:
        summary = gn.generate(net, tmp, n_scenarios=40, seed=0)
        assert summary["n_pairs"] > 0
        model = gn.train(net, tmp, epochs=3, seed=0, hidden=100)
        assert model.dims == (112, 100, 72)

        out = model.solve(net, pd=pd, qd=qd)
        assert len(out["v"]) == 30 and math.isfinite(out["cost"])
        print(f"learned: {out['status']} after {out['iterations']} iterations, cost {out['cost']:.4f} $/h")

        projected = model.project(0.9)
        c = projected.contraction()
        assert c["is_contraction"] and c["c"] <= 0.9
        assert projected.solve(net, tol=1e-8, max_iter=500)["status"] == "Converged"

        path = os.path.join(tmp, "model.gnw")
        model.save(path)
        again = gn.Model.load(path)
        assert again.solve(net)["cost"] == model.solve(net)["cost"]

        report = gn.evaluate(model, net, count=5, out_dir=tmp)
        assert report["clamp_violations"] == 0
        assert os.path.exists(os.path.join(tmp, "metrics.csv"))
        print(f"eval: MAPE {report['mape_cost']:.2f}%, MAE v {report['mae_v']:.4f} pu")

    try:
        gn.Network.from_text("not a case")
    except ValueError:
        pass
    else:
        raise AssertionError("bad case text was accepted")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
