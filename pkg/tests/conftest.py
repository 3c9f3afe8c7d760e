from hypothesis import HealthCheck, settings

# property tests share machines with training runs; wall-clock deadlines
# would only add flakes
settings.register_profile(
    "mpdet", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("mpdet")
