#!/usr/bin/env python3
"""Independent WFDB record decoder used as a cross-check oracle.

Reads a format-212 record (.hea, .dat) and its MIT-format annotation
file (.atr) with a from-scratch implementation, and prints the decoded
ADC sample stream and annotation list as JSON on stdout.

Usage: wfdb_oracle.py DATA_DIR RECORD_NAME
"""

import json
import sys
from pathlib import Path


def parse_header(text):
    lines = [
        ln for ln in text.splitlines()
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    first = lines[0].split()
    name = first[0].split("/")[0]
    n_signals = int(first[1])
    rate = float(first[2].split("/")[0])
    n_samples = int(first[3])
    signals = []
    for ln in lines[1:1 + n_signals]:
        f = ln.split()
        fmt = ""
        for ch in f[1]:
            if ch.isdigit():
                fmt += ch
            else:
                break
        gain_field = f[2].split("/")[0] if len(f) > 2 else "200"
        if "(" in gain_field:
            gain = float(gain_field[:gain_field.index("(")])
            baseline = int(gain_field[gain_field.index("(") + 1:gain_field.index(")")])
        else:
            gain = float(gain_field)
            baseline = None
        adc_zero = int(f[4]) if len(f) > 4 else 0
        signals.append({
            "file_name": f[0],
            "format": int(fmt),
            "gain": gain,
            "baseline": baseline if baseline is not None else adc_zero,
            "adc_zero": adc_zero,
        })
    return {
        "name": name,
        "n_signals": n_signals,
        "rate": rate,
        "n_samples": n_samples,
        "signals": signals,
    }


def decode_212(data, total_samples):
    """Two 12-bit two's-complement samples packed into each 3-byte group."""
    out = []
    for k in range(0, (total_samples + 1) // 2 * 3, 3):
        b0, b1, b2 = data[k], data[k + 1], data[k + 2]
        s1 = ((b1 & 0x0F) << 8) | b0
        s2 = ((b1 & 0xF0) << 4) | b2
        for s in (s1, s2):
            if s > 2047:
                s -= 4096
            out.append(s)
    return out[:total_samples]


def parse_annotations(data):
    entries = []
    time = 0
    channel = 0
    i = 0
    while i + 1 < len(data):
        word = data[i] | (data[i + 1] << 8)
        i += 2
        code = word >> 10
        increment = word & 0x3FF
        if code == 0 and increment == 0:
            break
        if code == 59:  # SKIP: 4 extra bytes, high 16 bits first
            high = data[i] | (data[i + 1] << 8)
            low = data[i + 2] | (data[i + 3] << 8)
            i += 4
            time += (high << 16) | low
        elif code in (60, 61):  # NUM, SUB: modify previous, no time change
            pass
        elif code == 62:  # CHN
            channel = increment & 0xFF
        elif code == 63:  # AUX: increment is the byte count, even-padded
            i += increment + (increment & 1)
        else:
            time += increment
            entries.append({
                "sample_index": time,
                "symbol_code": code,
                "channel": channel,
            })
    return entries


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__.strip())
    data_dir = Path(sys.argv[1])
    name = sys.argv[2]
    header = parse_header((data_dir / f"{name}.hea").read_text())
    dat = (data_dir / header["signals"][0]["file_name"]).read_bytes()
    interleaved = decode_212(dat, header["n_samples"] * header["n_signals"])
    leads = [
        interleaved[k::header["n_signals"]]
        for k in range(header["n_signals"])
    ]
    atr_path = data_dir / f"{name}.atr"
    annotations = parse_annotations(atr_path.read_bytes()) if atr_path.exists() else []
    json.dump(
        {"header": header, "leads": leads, "annotations": annotations},
        sys.stdout,
    )


if __name__ == "__main__":
    main()
