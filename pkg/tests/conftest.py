import os
from datetime import timedelta

from hypothesis import settings

settings.register_profile("ci", deadline=timedelta(seconds=5))
settings.register_profile("dev", max_examples=20)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))
