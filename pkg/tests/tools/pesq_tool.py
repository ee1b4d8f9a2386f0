"""Command-line PESQ scorer used to exercise the external-tool hook.

Usage: pesq_tool.py +<fs> <reference.wav> <degraded.wav>
Prints ``P.862 Prediction (Raw MOS, MOS-LQO):  = <raw> <lqo>``.
"""
import sys

from scipy.io import wavfile
from pesq import pesq


def main(argv):
    fs = int(argv[0].lstrip("+"))
    _, ref = wavfile.read(argv[1])
    _, deg = wavfile.read(argv[2])
    mode = "nb" if fs == 8000 else "wb"
    score = pesq(fs, ref.astype(float), deg.astype(float), mode)
    print(f"P.862 Prediction (Raw MOS, MOS-LQO):  = {score:.3f} {score:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
