import sys

from dummyless.cli import main

sys.exit(main())
