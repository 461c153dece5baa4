from datetime import date

import pytest

from wallk.weather import build_env_series, detect_sunrise, synthetic_records


@pytest.fixture(scope="session")
def summer_env():
    day = date(2023, 7, 1)
    recs = synthetic_records(day, 1, seed=7)
    return build_env_series(recs, detect_sunrise(recs, day))
