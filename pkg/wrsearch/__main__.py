import sys

from wrsearch.cli import main

sys.exit(main())
