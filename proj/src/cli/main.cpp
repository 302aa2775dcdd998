#include "soilgen/cli.hpp"

int main(int argc, char** argv) {
    return soilgen::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
