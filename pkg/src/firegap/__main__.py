import sys

from firegap.bench.cli import main

sys.exit(main())
