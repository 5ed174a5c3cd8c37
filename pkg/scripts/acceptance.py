"""Print the acceptance table (criteria 1-11) without pytest.

    python scripts/acceptance.py
"""
import runpy
from pathlib import Path

if __name__ == "__main__":
    runpy.run_path(str(Path(__file__).resolve().parent.parent / "tests" / "test_acceptance.py"), run_name="__main__")
