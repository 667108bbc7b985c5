#include "drivepoison/cli.hpp"

int main(int argc, char** argv) {
    return drivepoison::cli::run(argc, argv);
}
