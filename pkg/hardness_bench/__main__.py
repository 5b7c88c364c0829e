import sys

from hardness_bench.cli import main

sys.exit(main())
