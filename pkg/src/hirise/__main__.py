import sys

from hirise.cli import main

sys.exit(main())
