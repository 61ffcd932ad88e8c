#include "seqdiff/cli.hpp"

int main(int argc, char** argv) {
    return seqdiff::cli::run(argc, argv);
}
