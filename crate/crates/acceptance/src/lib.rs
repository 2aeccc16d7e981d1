//! Holds the `acceptance` test target, which runs every acceptance criterion
//! against the shipped `path12` model and prints one line per criterion.
