# Tests for qelm
