import sys

from paneitz.cli import main

sys.exit(main())
