import os
import sys

os.environ["RUN_CONTEXT"] = "test"
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale training sweeps (minutes)")
