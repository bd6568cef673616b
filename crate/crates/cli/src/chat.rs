use std::io::{BufRead, IsTerminal, Write};
use std::path::Path;

use kbdialog::corpus::{kb_entities, serialize_kb, tokenize, KbAttribute, KbRecord, Speaker, TrainingInstance};
use kbdialog::generator::{encode_instance, LatentInput};
use kbdialog::pipeline::{load_generator, LoadedGenerator};
use kbdialog::{Error, Result};

fn parse_kb(pairs: &[String]) -> Result<Vec<KbRecord>> {
    if pairs.is_empty() {
        return Ok(vec![]);
    }
    let attributes = pairs
        .iter()
        .map(|kv| {
            kv.split_once('=')
                .filter(|(k, _)| !k.trim().is_empty())
                .map(|(k, v)| KbAttribute::new(k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("--kb expects KEY=VALUE, got `{kv}`")))
        })
        .collect::<Result<_>>()?;
    Ok(vec![KbRecord { attributes }])
}

fn respond(g: &LoadedGenerator, kb: &[KbRecord], context: &[(Speaker, Vec<String>)], user: Vec<String>) -> Result<Vec<String>> {
    let inst = TrainingInstance {
        dialogue_id: "chat".into(),
        domain: "chat".into(),
        context: context.to_vec(),
        user,
        response: vec![],
        kb: serialize_kb(kb),
        entities: kb_entities(kb),
    };
    let latent = match &g.stage1 {
        Some(s) => s.latent_inputs(g.model.config().conditioning, std::slice::from_ref(&inst))?.remove(0),
        None => LatentInput::None,
    };
    let enc = encode_instance(g.model.vocab(), &inst, latent, &g.external)?;
    Ok(g.model.generate(&[&enc], g.model.config().max_decode_len)?.remove(0))
}

/// Reads user lines from stdin and prints one greedy response per line.
pub fn run(checkpoint: &Path, kb: &[String]) -> Result<()> {
    let g = load_generator(checkpoint)?;
    let kb = parse_kb(kb)?;
    let stdin = std::io::stdin();
    let interactive = stdin.is_terminal();
    let mut context: Vec<(Speaker, Vec<String>)> = Vec::new();
    let mut out = std::io::stdout();
    loop {
        if interactive {
            eprint!("> ");
        }
        let mut line = String::new();
        if stdin.lock().read_line(&mut line).map_err(|e| Error::io(Path::new("<stdin>"), e))? == 0 {
            break;
        }
        match line.trim() {
            ":quit" => break,
            ":reset" => context.clear(),
            "" => {}
            text => {
                let user = tokenize(text);
                let reply = respond(&g, &kb, &context, user.clone())?;
                writeln!(out, "{}", reply.join(" ")).map_err(|e| Error::io(Path::new("<stdout>"), e))?;
                out.flush().map_err(|e| Error::io(Path::new("<stdout>"), e))?;
                context.push((Speaker::User, user));
                context.push((Speaker::System, reply));
            }
        }
    }
    Ok(())
}
