import sys

from porcti.cli import main

sys.exit(main())
