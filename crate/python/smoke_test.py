"""Smoke test for the Python bindings: python python/smoke_test.py"""

import json
import math
import os
import tempfile

import hjbounds_py as hj


def main():
    assert "paper-example-6" in hj.presets()
    ok, msgs = hj.check(preset="paper-example-6")
    assert ok and not msgs, msgs

    cfg = json.loads(hj.preset_config("paper-example-6"))
    cfg["system"]["e"][1][0] = "3*(0.5+0.5*sin(pi/2*t))"
    ok, msgs = hj.check(config=json.dumps(cfg))
    assert not ok and msgs

    b = hj.Bundle.precompute(preset="paper-example-6")
    assert b.dim == 3 and b.num_characteristics == 421
    lo, up = b.bounds(0.0, [0.0, 0.0, 0.0])
    assert up - lo <= 1e-6, (lo, up)
    lo, up = b.bounds(0.0, [0.5, -0.2, 0.1])
    assert lo <= up
    assert b.classify(0.0, [0.0, 0.0, 0.0], 0.6) == 1
    iv = b.interval(1.5, [0.3, 0.4, 0.0])
    assert iv["lower"] <= 0.5 + 1e-12 <= iv["upper"] + 2e-12

    pts, lower, upper = b.grid(0.0, "-1:1:5,0:0:1,0:0:1")
    assert len(pts) == 5 and all(l <= u + 1e-9 for l, u in zip(lower, upper))

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "b.hjb")
        size = b.save(path)
        assert size == os.path.getsize(path)
        back = hj.Bundle.load(path)
        assert back.config_hash == b.config_hash
        assert back.bounds(0.2, [0.1, 0.1, 0.1]) == b.bounds(0.2, [0.1, 0.1, 0.1])

    try:
        b.bounds(9.0, [0.0, 0.0, 0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("time outside the horizon was accepted")

    values = hj.grid_solve("-2:2:41,-2:2:41", 0.5, preset="double-integrator")
    assert len(values) == 41 * 41 and all(math.isfinite(v) for v in values)
    w = hj.reach_oracle(0.0, [1.0, 0.0], preset="double-integrator")
    di = hj.Bundle.precompute(preset="double-integrator")
    lo, up = di.bounds(0.0, [1.0, 0.0])
    assert lo - 1e-3 <= w <= up + 1e-3, (lo, w, up)

    print("smoke test passed:", b)


if __name__ == "__main__":
    main()
