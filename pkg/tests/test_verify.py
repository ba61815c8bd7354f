import numpy as np

from udi import autodiff as ad
from udi import verify


def test_all_checks_pass():
    results = verify.run_all()
    failed = [r for r in results if not r.passed]
    assert not failed, verify.format_report(failed)
    report = verify.format_report(results)
    assert report.splitlines()[-1] == f"{len(results)}/{len(results)} checks passed"


def test_gradient_check_catches_a_wrong_backward(monkeypatch):
    def bad_relu(a):
        mask = a.data > 0
        return ad._make(np.maximum(a.data, 0.0), (a,), lambda g: (-g * mask,), "relu")

    monkeypatch.setattr(ad, "relu", bad_relu)
    results = verify.check_gradients()
    by_name = {r.name: r for r in results}
    assert not by_name["grad:cross_entropy"].passed
    assert not by_name["grad:fused_loss"].passed


def test_report_marks_failures():
    text = verify.format_report([verify.Check("x", 2.0, 1.0, False, "bad")])
    assert text.startswith("FAIL  x")
    assert text.endswith("0/1 checks passed")
