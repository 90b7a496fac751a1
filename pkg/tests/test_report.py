import numpy as np

from nric import meshgen
from nric.report import (Report, convergence_figure, histogram_figure, mesh_figure,
                         segment_energy_figure)


def test_render_sections_and_tables():
    r = Report("demo")
    r.add(a=1, b=0.5, flag=True)
    r.add("solver", converged=False)
    r.table("t", ["k", "v"], [[1, 0.25], [2, np.float64(1e-20)]])
    text = r.render()
    assert text.splitlines()[:5] == ["# demo", "[summary]", "a = 1", "b = 0.5", "flag = true"]
    assert "[solver]\nconverged = false" in text
    assert "[table t]\nk,v\n1,0.25\n2,1e-20" in text


def test_write_renders_figures(tmp_path):
    F, X = meshgen.dome(4, 4, 0.2)
    r = Report("figs")
    r.figure("mesh", mesh_figure(X, F, np.arange(len(F)), "order"))
    r.figure("vmesh", mesh_figure(X, F, X[:, 2], "height"))
    r.figure("conv", convergence_figure([dict(outer=0, constraint_inf=1e-2, lagrangian_grad=1e-3),
                                         dict(outer=1, constraint_inf=0.0, lagrangian_grad=1e-9)]))
    r.figure("seg", segment_energy_figure({"a": [1, 2, 3], "b": [2, 2, 2]}))
    r.figure("hist", histogram_figure([1.0, 2.0, np.inf]))
    written = r.write(tmp_path / "sub" / "rep.txt")
    assert len(written) == 6
    assert all(p.stat().st_size > 0 for p in written)
    assert (tmp_path / "sub" / "rep_seg.png").exists()
