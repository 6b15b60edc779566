"""Time the stepping kernels with numba and with the plain-numpy fallback.

    python benchmarks/bench_kernels.py [steps]
"""

import sys

from oscibench.bench import run_benchmark

if __name__ == "__main__":
    run_benchmark(int(sys.argv[1]) if len(sys.argv) > 1 else 20000)
