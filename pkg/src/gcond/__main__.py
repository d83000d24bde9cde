import sys

from gcond.cli import main

sys.exit(main())
