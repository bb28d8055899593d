#!/usr/bin/env python3
"""Smoke test for the ecgfusion Python extension.

Build the module first, then run this script from the repository root:

    cargo build -p ecgfusion-py --release
    python3 python/smoke_test.py
"""

import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def import_extension():
    for profile in ("release", "debug"):
        for stem in ("libecgfusion", "ecgfusion"):
            for ext in (".so", ".dylib"):
                built = ROOT / "target" / profile / f"{stem}{ext}"
                if built.exists():
                    staging = Path(tempfile.mkdtemp(prefix="ecgfusion_py_"))
                    shutil.copy(built, staging / "ecgfusion.so")
                    sys.path.insert(0, str(staging))
                    import ecgfusion
                    return ecgfusion
    sys.exit("extension not found; run `cargo build -p ecgfusion-py --release` first")


def main():
    ecg = import_extension()

    with tempfile.TemporaryDirectory() as tmp:
        data_dir = Path(tmp) / "data"
        out_dir = Path(tmp) / "out"
        data_dir.mkdir()

        names = ecg.synth_dataset(str(data_dir), 6, 60.0, 2024)
        assert len(names) == 6 and names[0] == "100", names

        samples, annotations = ecg.read_lead(str(data_dir), "100", 0)
        assert len(samples) == 60 * 360, len(samples)
        assert annotations, "expected annotations"
        beat_codes = {code for _, code, _ in annotations}
        assert beat_codes & {1, 2, 3, 5, 12}, beat_codes

        clean = ecg.denoise_signal(samples)
        assert len(clean) == len(samples)

        beats = ecg.detect(clean)
        assert len(beats) > 40, f"only {len(beats)} beats detected"
        for r, p, q, s, t in beats[1:-1]:
            if q is not None:
                assert q < r, (q, r)
            if s is not None:
                assert s > r, (s, r)

        assert ecg.preset_params("T") == 83_973
        assert ecg.preset_params("S") == 149_765
        assert ecg.preset_weight_bytes("T") == 83_973 * 4

        total, train, test = ecg.run_front_half(str(data_dir), str(out_dir))
        assert total == train + test and total > 200, (total, train, test)

        accuracy = ecg.train_preset(str(data_dir), str(out_dir), "T", 2, 0)
        assert 0.0 <= accuracy <= 1.0, accuracy
        print(f"smoke test passed: {total} beats, preset T accuracy {accuracy:.3f}")


if __name__ == "__main__":
    main()
