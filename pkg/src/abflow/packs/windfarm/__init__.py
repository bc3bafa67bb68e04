from .providers import (
    DEFAULT_SEED,
    DEMO_REFERENCE,
    PERFORMANCE_FACTORS,
    TURBINE_IDS,
    WindfarmProviders,
    band_of,
    efficiency_ranking,
    expected_power,
    load_power_curve,
    parse_time_range,
    registry_manifest_path,
    turbine_readings,
    weather_measurements,
)
from .fixtures import (
    USER_REQUEST,
    build_demo_fixture,
    demo_plan_steps,
    demo_ranking,
    render_demo_report,
    write_demo_fixture,
)
