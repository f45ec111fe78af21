#include "scarr/cli.hpp"

int main(int argc, char** argv)
{
    return scarr::cli::run(argc, argv);
}
