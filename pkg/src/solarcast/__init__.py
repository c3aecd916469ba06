"""Per-station solar irradiance forecasting from weather features."""

from solarcast._accel import backend_name
from solarcast.solar_geometry import GeoLocation

__version__ = "0.1.0"

__all__ = ["GeoLocation", "backend_name", "__version__"]
