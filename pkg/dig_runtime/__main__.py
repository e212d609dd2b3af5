import sys

from dig_runtime.cli import main

sys.exit(main())
