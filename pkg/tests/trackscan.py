"""Test runner used by `briefcase dev --test` and `briefcase run --test`."""

import os
import sys
import tempfile
from pathlib import Path

import pytest


def run_tests() -> int:
    os.chdir(Path(__file__).parent.parent)

    # extra arguments select tests; default to the whole suite
    selection = sys.argv[1:] or ["tests"]
    returncode = pytest.main(
        [
            "-vv",
            "--color=no",
            # the bundled app directory may be read-only
            "-o",
            f"cache_dir={tempfile.gettempdir()}/.trackscan_pytest_cache",
            *selection,
        ]
    )
    print(f">>>>>>>>>> EXIT {returncode} <<<<<<<<<<")
    return int(returncode)


if __name__ == "__main__":
    sys.exit(run_tests())
