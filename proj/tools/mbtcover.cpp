#include "mbtcover/cli.hpp"

int main(int argc, char** argv) { return mbtcover::cli_main(argc, argv); }
