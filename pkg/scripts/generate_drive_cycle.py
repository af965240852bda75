"""
Genererer den syntetiske kjøresyklusen tem/data/drive_cycle_synthetic.csv
(3600 s, 10 Hz).

Bruk: python scripts/generate_drive_cycle.py
"""

import sys
from pathlib import Path

import pandas as pd

sys.path.insert(0, str(Path(__file__).parent.parent))

from tem.drive_cycle import DEFAULT_CYCLE_PATH, synthetic_cycle


def main():
    cycle = synthetic_cycle(duration=3600.0, rate=10.0)
    df = pd.DataFrame({
        "t_s": [f"{v:.1f}" for v in cycle.t],
        "v_mps": [f"{v:.4f}" for v in cycle.v],
        "I_b_A": [f"{v:.4f}" for v in cycle.I_b],
    })
    df.to_csv(DEFAULT_CYCLE_PATH, index=False)
    print(f"Skrev {DEFAULT_CYCLE_PATH.name} ({len(df)} rader, {cycle.duration:.0f} s)")


if __name__ == "__main__":
    main()
