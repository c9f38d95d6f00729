import sys

from softmachine.cli import main

sys.exit(main())
