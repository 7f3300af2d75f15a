"""SVG emission sanity for every plot kind."""

import pytest

from crem.plots import Series, emit_plot, line_plot


def test_line_plot_basic():
    svg = line_plot([Series("a", [1, 2, 3], [0.1, 0.2, 0.15])], "x", "y", "t")
    assert svg.startswith("<svg") and svg.endswith("</svg>")
    assert "polyline" in svg and ">t</text>" in svg
    with pytest.raises(ValueError):
        line_plot([], "x", "y", "t")


def test_line_plot_loglog_and_vline():
    svg = line_plot([Series("a", [2, 4, 8], [1.0, 0.7, 0.5])], "M", "dev",
                    "conc", loglog=True, ref_slope=-0.5)
    assert "slope -0.5" in svg
    svg = line_plot([Series("a", [0.5, 1.5], [1.0, 2.0])], "beta", "kl",
                    "kl", vline=1.0)
    assert "stroke-dasharray" in svg


def test_emit_plot_kinds():
    kl_rows = [{"beta": 0.5, "mean_kl_per_n": 0.01, "beta_G": 0.96},
               {"beta": 1.5, "mean_kl_per_n": 0.2, "beta_G": 0.96}]
    assert emit_plot(kl_rows, "kl-vs-beta").startswith("<svg")
    dev_rows = [{"M": 2, "dev_l2": 0.5, "bound_l2": 2.8},
                {"M": 8, "dev_l2": 0.25, "bound_l2": 1.4}]
    assert emit_plot(dev_rows, "deviation-vs-M").startswith("<svg")
    rate_rows = [{"N": 40, "p_hat": 0.05}, {"N": 80, "p_hat": 0.01}]
    assert emit_plot(rate_rows, "steep-rate").startswith("<svg")
    brw_rows = [{"beta": 0.5, "f_hat": 0.8, "f_limit": 0.82},
                {"beta": 1.0, "f_hat": 1.15, "f_limit": 1.19}]
    assert emit_plot(brw_rows, "brw").startswith("<svg")
    with pytest.raises(ValueError):
        emit_plot(kl_rows, "no-such-kind")
    with pytest.raises(ValueError):
        emit_plot([], "brw")
    with pytest.raises(ValueError):
        emit_plot([{"x": 1}], "brw")
