#include "crodobo/cli.hpp"

int main(int argc, char** argv) {
    return crodobo::run_cli(argc, argv);
}
