import sys

from solarcast.cli import main

sys.exit(main())
