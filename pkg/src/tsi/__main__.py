import sys

from tsi.cli import main

sys.exit(main())
